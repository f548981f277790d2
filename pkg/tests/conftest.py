"""测试公共夹具"""

import os
import sys

import pytest

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from core.config_loader import reset_config_loader
from core.environment import Bernoulli, LatticeEnvironment, sample_environment


@pytest.fixture
def bernoulli():
    return Bernoulli(0.5)


@pytest.fixture
def bernoulli_env(bernoulli):
    """d=1、窗口20的Bernoulli(0.5)环境"""
    return sample_environment(bernoulli, 1, 20, seed=12345)


@pytest.fixture
def two_path_env():
    """d=1, n=1：η(1,-1)=0，η(1,1)=1"""
    return LatticeEnvironment.from_function(1, 1, lambda k, site: 1.0 if site == (1,) else 0.0)


@pytest.fixture(autouse=True)
def fresh_config_loader():
    reset_config_loader()
    yield
    reset_config_loader()

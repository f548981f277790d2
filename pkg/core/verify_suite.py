"""
验证套件 - PolymerLab核心模块
在固定的小规模（n <= 20）上运行全部精确恒等式与逐环境不等式，输出通过/失败台账
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List

import numpy as np
from scipy.special import logsumexp

from core.check_report import CheckReport, anchored, check_at_least, check_at_most, check_identity
from core.conjugate_system import biconjugate, legendre
from core.count_system import (count_table, count_threshold, empirical_measure,
                               verify_partition_identity, verify_tightness_bound)
from core.environment import (Bernoulli, FiniteDiscrete, Gaussian, LatticeEnvironment,
                              derive_seed, is_infinite, sample_environment)
from core.lattice import box_sites
from core.smoothed_system import (sandwich_bounds, sigma_from_table, smoothed_value,
                                  superadditivity_check_pathwise)
from core.transfer_system import (BRUTE_FORCE_LIMIT, brute_force_endpoint, brute_force_histogram,
                                  brute_force_max, brute_force_partition, endpoint_distribution,
                                  enumerate_path_weights, max_path_weight, partition_log,
                                  walk_distribution)

logger = logging.getLogger(__name__)

ORACLE_TOLERANCE = 1e-10
IDENTITY_TOLERANCE = 1e-9


@dataclass
class VerifyLedger:
    """验证台账"""
    seed: int
    reports: List[CheckReport] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.reports)

    def failures(self) -> List[CheckReport]:
        return [r for r in self.reports if not r.passed]

    def extend(self, reports: List[CheckReport]) -> None:
        self.reports.extend(reports)

    def to_dict(self) -> Dict[str, Any]:
        return {"seed": self.seed, "passed": self.passed, "total": len(self.reports),
                "failed": len(self.failures()), "checks": [r.to_dict() for r in self.reports]}


# ==================== 各部分 ====================

def _model_checks() -> List[CheckReport]:
    reports = []
    models = [Bernoulli(0.5), Bernoulli(0.3), Gaussian(0.0, 1.0), FiniteDiscrete([-1.0, 1.0], [0.5, 0.5])]
    betas = np.linspace(-3.0, 3.0, 25)
    for model in models:
        name = repr(model)
        reports.append(check_identity("log_mgf_at_zero", model.log_mgf(0.0), 0.0, 1e-15, {"model": name}))
        h = 1e-5
        slope = (model.log_mgf(h) - model.log_mgf(-h)) / (2 * h)
        reports.append(check_identity("log_mgf_slope", slope, model.mean(), 1e-6, {"model": name}))
        worst = math.inf
        for b1, b2 in zip(betas, betas[2:]):
            mid = model.log_mgf(0.5 * (b1 + b2))
            worst = min(worst, 0.5 * (model.log_mgf(b1) + model.log_mgf(b2)) - mid)
        reports.append(check_at_least("log_mgf_convexity", worst, 0.0, 1e-12, {"model": name}))
        reports.append(check_identity("conjugate_at_mean", float(model.conjugate(model.mean())), 0.0,
                                      1e-8, {"model": name}))
        lo, hi = model.support()
        rhos = np.linspace(max(lo, -3.0), min(hi, 3.0), 21)
        fenchel = math.inf
        for rho in rhos.tolist():
            star = model.conjugate(rho)
            if is_infinite(star):
                continue
            fenchel = min(fenchel, min(model.log_mgf(b) + star - rho * b for b in betas.tolist()))
        reports.append(check_at_least("fenchel_young", fenchel, 0.0, 1e-10, {"model": name}))
    return reports


def _environment_checks(seed: int) -> List[CheckReport]:
    model = Bernoulli(0.5)
    first = sample_environment(model, 2, 6, seed)
    again = sample_environment(model, 2, 6, seed)
    differing = sum(int(np.count_nonzero(first.full_slice(k) != again.full_slice(k))) for k in range(1, 7))
    reports = [check_identity("environment_reproducibility", differing, 0, 0)]
    view = first.translate(1, (1, 0)).translate(2, (0, -1))
    direct = first.translate(3, (1, -1))
    mismatch = sum(int(np.count_nonzero(view.slice(i) != direct.slice(i))) for i in range(1, 4))
    reports.append(check_identity("translation_composition", mismatch, 0, 0))
    return reports


def _transfer_checks(seed: int, cases: int, limit: int) -> List[CheckReport]:
    reports = []
    model = Bernoulli(0.5)
    for i in range(cases):
        d, n = (1, 8) if i % 2 == 0 else (2, 5)
        env = sample_environment(model, d, n, derive_seed(seed, i))
        beta = 1.7 - 0.3 * (i % 5)
        details = {"d": d, "n": n, "beta": beta}
        reports.append(check_identity("partition_brute_force", partition_log(env, n, beta).log_z,
                                      brute_force_partition(env, n, beta, limit), ORACLE_TOLERANCE, details))
        tv = endpoint_distribution(env, n, beta).total_variation(brute_force_endpoint(env, n, beta, limit))
        reports.append(check_at_most("endpoint_brute_force", tv, 0.0, ORACLE_TOLERANCE, details))
        reports.append(check_identity("max_weight_brute_force", max_path_weight(env, n),
                                      brute_force_max(env, n, limit), 0.0, details))
        if beta > 0:
            reports.append(check_at_least("max_weight_bound", max_path_weight(env, n),
                                          partition_log(env, n, beta).log_z / beta, 1e-12, details))
        walk = walk_distribution(d, n).total()
        reports.append(check_identity("walk_normalization", walk, 1.0, 1e-10, {"d": d, "n": n}))
    return reports


def _count_checks(seed: int, cases: int, limit: int) -> List[CheckReport]:
    reports = []
    model = Bernoulli(0.5)
    for i in range(cases):
        d, n = (1, 8) if i % 2 == 0 else (2, 4)
        env = sample_environment(model, d, n, derive_seed(seed, 1000 + i))
        table = count_table(env, n)
        reports.append(check_identity("count_total", table.total(), (2 * d) ** n, 0, {"d": d, "n": n}))
        brute = brute_force_histogram(env, n, limit)
        mismatch = 0
        for site in box_sites(n, d):
            for h in table.h_values.tolist():
                if table.count(site, h) != brute.get((site, h), 0):
                    mismatch += 1
        reports.append(check_identity("count_brute_force", mismatch, 0, 0, {"d": d, "n": n}))
        measure = empirical_measure(table)
        reports.append(check_identity("empirical_mass", float(measure.total_mass()), 1.0, 0.0,
                                      {"exact": measure.total_mass() == 1}))
    long_env = sample_environment(model, 1, 20, derive_seed(seed, 2000))
    table = count_table(long_env, 20)
    for beta in (-2.0, -0.5, 0.0, 1.0, 1.7, 3.0):
        reports.append(verify_partition_identity(table, long_env, beta, IDENTITY_TOLERANCE))
        if beta > 0:
            reports.append(verify_tightness_bound(table, long_env, beta))
    m = model.mean()
    for rho in (0.5, 0.6, 0.75, 0.3):
        exact = count_threshold(table, rho, m)
        masses = empirical_measure(table)
        if rho >= m:
            tail = sum(c for h, c in masses.counts.items() if h >= 20 * rho)
        else:
            tail = sum(c for h, c in masses.counts.items() if h <= 20 * rho)
        reports.append(check_identity("threshold_count", exact, tail, 0, {"rho": rho}))
    zero = LatticeEnvironment.constant(1, 10, 0.0)
    endpoints = count_table(zero, 10).endpoint_counts()
    binomial = [math.comb(10, (x + 10) // 2) if (x + 10) % 2 == 0 else 0 for x in range(-10, 11)]
    reports.append(check_identity("walk_counts_binomial",
                                  sum(int(a != b) for a, b in zip(endpoints.tolist(), binomial)), 0, 0))
    return reports


def _brute_smoothed(env, n: int, lam: float, a: float, limit: int) -> float:
    paths = enumerate_path_weights(env, n, limit)
    return float(logsumexp(-lam * np.abs(paths.weights - a)) - n * math.log(2 * env.d))


def _smoothed_checks(seed: int, cases: int, limit: int) -> List[CheckReport]:
    reports = []
    rng = np.random.default_rng(seed)
    model = Bernoulli(0.5)
    for i in range(cases):
        d, n = (1, 6) if i % 2 == 0 else (2, 4)
        env = sample_environment(model, d, 20, derive_seed(seed, 3000 + i))
        table = count_table(env, n)
        lam = float(rng.choice([0.5, 1.0, 5.0]))
        a, a2 = float(rng.uniform(-1.0, n + 1.0)), float(rng.uniform(-1.0, n + 1.0))
        value = smoothed_value(table, lam, a).value
        details = {"d": d, "n": n, "lambda": lam, "a": a}
        reports.append(check_identity("smoothed_brute_force", value, _brute_smoothed(env, n, lam, a, limit),
                                      ORACLE_TOLERANCE, details))
        reports.append(check_at_most("smoothed_sign", value, 0.0, 0.0, details))
        other = smoothed_value(table, lam, a2).value
        reports.append(check_at_most("smoothed_lipschitz", abs(value - other), lam * abs(a - a2),
                                     ORACLE_TOLERANCE, details))
        sigma = sigma_from_table(table, a, lam)
        reports.append(check_identity("sigma_normalization", sigma.total(), 1.0, ORACLE_TOLERANCE, details))

        n1, m1 = int(rng.integers(0, 8)), int(rng.integers(0, 8))
        reports.append(superadditivity_check_pathwise(
            env, n1, m1, float(rng.uniform(0.0, m1 + 1.0)), float(rng.uniform(0.0, n1 + 1.0)), lam))

        big = count_table(env, 20)
        xi = float(rng.uniform(0.2, 0.8))
        delta = float(rng.choice([0.05, 0.1, 0.2]))
        reports.extend(sandwich_bounds(big, xi, delta, float(rng.choice([1.0, 5.0, 20.0]))).checks())
    return reports


def _conjugate_checks() -> List[CheckReport]:
    model = Bernoulli(0.5)
    betas = np.round(np.arange(-10.0, 10.0 + 1e-9, 0.01), 10)
    values = np.array([model.log_mgf(b) for b in betas])
    rate = legendre(betas, values)
    worst = 0.0
    for rho in np.linspace(0.1, 0.9, 17).tolist():
        worst = max(worst, abs(rate.evaluate(rho)[0] - float(model.conjugate(rho))))
    reports = [check_at_most("legendre_closed_form", worst, 0.0, 1e-3)]
    back = biconjugate(rate)
    reports.append(check_at_most("biconjugate_fixpoint", float(np.max(np.abs(back - values))), 0.0, 1e-9))
    return reports


SECTIONS: Dict[str, Callable[..., List[CheckReport]]] = {
    "model": lambda seed, cases, limit: _model_checks(),
    "environment": lambda seed, cases, limit: _environment_checks(seed),
    "transfer": _transfer_checks,
    "count": _count_checks,
    "smoothed": _smoothed_checks,
    "conjugate": lambda seed, cases, limit: _conjugate_checks(),
}


def verify_suite(seed: int, cases: int = 20, limit: int = BRUTE_FORCE_LIMIT) -> VerifyLedger:
    """
    运行全部验证

    参数:
        seed: 主种子
        cases: 每部分的随机实例数
        limit: 暴力枚举的路径数上限

    返回:
        VerifyLedger
    """
    ledger = VerifyLedger(int(seed))
    for name, section in SECTIONS.items():
        reports = [anchored(r) for r in section(int(seed), int(cases), int(limit))]
        ledger.extend(reports)
        failed = sum(1 for r in reports if not r.passed)
        if failed:
            logger.warning(f"验证部分 {name}: {failed}/{len(reports)} 项失败")
        else:
            logger.info(f"验证部分 {name}: {len(reports)} 项全部通过")
    return ledger

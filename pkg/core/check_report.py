"""
检查记录 - PolymerLab核心模块
所有恒等式/不等式检查统一输出 {name, lhs, rhs, slack, pass}
"""

import math
from dataclasses import dataclass, field, replace
from typing import Any, Dict, Optional


def json_number(value: Any) -> Any:
    """JSON友好的数值：±inf/nan转为字符串"""
    if isinstance(value, float) and not math.isfinite(value):
        if math.isnan(value):
            return "nan"
        return "+inf" if value > 0 else "-inf"
    return value


@dataclass(frozen=True)
class CheckReport:
    """
    单条检查结果
    slack >= -tolerance 即通过；恒等式的slack为 -|lhs - rhs|
    """
    name: str
    lhs: float
    rhs: float
    slack: float
    passed: bool
    details: Dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        out = {
            "name": self.name,
            "lhs": json_number(float(self.lhs)),
            "rhs": json_number(float(self.rhs)),
            "slack": json_number(float(self.slack)),
            "pass": bool(self.passed),
        }
        if self.details:
            out["details"] = {k: json_number(v) for k, v in self.details.items()}
        return out


def check_at_least(name: str, lhs: float, rhs: float, tolerance: float,
                   details: Optional[Dict[str, Any]] = None) -> CheckReport:
    """lhs >= rhs - tolerance"""
    slack = _difference(lhs, rhs)
    return CheckReport(name, lhs, rhs, slack, slack >= -tolerance, dict(details or {}))


def check_at_most(name: str, lhs: float, rhs: float, tolerance: float,
                  details: Optional[Dict[str, Any]] = None) -> CheckReport:
    """lhs <= rhs + tolerance"""
    slack = _difference(rhs, lhs)
    return CheckReport(name, lhs, rhs, slack, slack >= -tolerance, dict(details or {}))


def check_identity(name: str, lhs: float, rhs: float, tolerance: float,
                   details: Optional[Dict[str, Any]] = None) -> CheckReport:
    """|lhs - rhs| <= tolerance"""
    if lhs == rhs:
        residual = 0.0
    else:
        residual = abs(_difference(lhs, rhs))
    return CheckReport(name, lhs, rhs, -residual, residual <= tolerance, dict(details or {}))


def _difference(a: float, b: float) -> float:
    # 两侧同为-inf（如零质量）时视为相等
    if a == b:
        return 0.0
    return float(a - b)


# 检查名 -> 所验证的命题
ANCHORS: Dict[str, str] = {
    "log_mgf_at_zero": "λ(0) = 0",
    "log_mgf_slope": "λ'(0) = E[ω]",
    "log_mgf_convexity": "λ 凸",
    "conjugate_at_mean": "λ*(E[ω]) = 0",
    "fenchel_young": "λ(β) + λ*(ρ) >= βρ",
    "environment_reproducibility": "η(k, x) 只由 (种子, k, x) 决定",
    "translation_composition": "τ_{k,x}∘τ_{j,y} = τ_{k+j,x+y}",
    "partition_brute_force": "log Z_n(β) = log E_P[e^{βH_n}]（全路径枚举）",
    "endpoint_brute_force": "μ_n(S_n = x)（全路径枚举）",
    "max_weight_brute_force": "max_s H_n(s)（全路径枚举）",
    "max_weight_bound": "max_s H_n(s) >= log Z_n(β)/β, β > 0",
    "walk_normalization": "Σ_x P(S_n = x) = 1",
    "count_total": "Σ_{x,h} C_n(x,h) = (2d)^n",
    "count_brute_force": "C_n(x,h)（全路径枚举）",
    "empirical_mass": "ν_n 是概率测度",
    "partition_identity": "log ∫ e^{βnx} dν_n(x) = log Z_n(β)",
    "tightness_bound": "∫ e^{βn|x|} dν_n <= Z_n(β) + Z_n(-β)",
    "threshold_count": "N_n(ρ) = #{s : H_n(s) >= nρ}（ρ < m 时取 <=）",
    "walk_counts_binomial": "η ≡ 0 时端点计数为二项系数",
    "smoothed_brute_force": "V^(λ)_n(a) = log E_P[e^{-λ|H_n - a|}]（全路径枚举）",
    "smoothed_sign": "V^(λ)_n <= 0",
    "smoothed_lipschitz": "|V^(λ)_n(a) - V^(λ)_n(b)| <= λ|a - b|",
    "sigma_normalization": "σ_n 是概率测度",
    "superadditivity_pathwise": "V_{n+m}(a+b) >= V_n(b) + Σ_y σ_n(y)·V_m(a; τ_{n,y}η)",
    "sandwich_upper": "ν_n([ξ-δ, ξ+δ]) <= e^{λnδ}·E_P[e^{-λ|H_n - nξ|}]",
    "sandwich_lower": "ν_n((ξ-δ, ξ+δ)) >= E_P[e^{-λ|H_n - nξ|}] - e^{-λnδ}",
    "legendre_closed_form": "网格Legendre变换与闭式λ*一致",
    "biconjugate_fixpoint": "λ** = λ（凸函数）",
    "jensen_bound": "p̂_n(β) <= λ(β)",
    "convexity": "β ↦ p̂_n(β) 凸",
    "superadditive_trend": "E[log Z_{2n}]/2n >= E[log Z_n]/n",
    "slope_at_zero": "∂_β p̂_n(0) = E[ω]",
    "symmetry": "p̂_n(β) = p̂_n(-β)（对称分布）",
    "conjugate_order": "I(ρ) >= λ*(ρ)",
    "rho_plus_bound": "ρ⁺ >= p̂(β)/β - log(2d)/β",
    "rho_minus_bound": "ρ⁻ >= p̂(-β)/β - log(2d)/β",
    "validity_upper": "sup{ρ : I(ρ) < ∞} <= ρ⁺",
    "validity_lower": "inf{ρ : I(ρ) < ∞} >= -ρ⁻",
    "growth_rate_trend": "|(1/n)log N_n(ρ) - (log(2d) - I(ρ))| 随n不增",
    "lambda_rate_trend": "-(1/n)E[V^(λ)_n(nξ)] 从上方逼近 I^(λ)(ξ)",
    "lambda_rate_jensen": "-(1/n)E[V^(λ)_n(nξ)] <= λ·E_P|H_n/n - ξ|",
    "lambda_monotonicity": "λ ↦ I^(λ)(ξ) 不减",
    "superadditivity_mean": "E[V_{n+m}(a+b)] >= E[V_n(a)] + E[V_m(b)]",
    "concentration_tail": "P(|V^(λ)_n(a) - E V^(λ)_n(a)| >= u) <= 2e^{-u²/(2λ²n)}",
    "two_route_consistency": "夹逼上界速率 ≈ Legendre 路线的 I(ξ)",
}


def anchored(report: CheckReport) -> CheckReport:
    """在details中附上检查名对应的命题"""
    anchor = ANCHORS.get(report.name)
    if anchor is None or "anchor" in report.details:
        return report
    return replace(report, details={**report.details, "anchor": anchor})

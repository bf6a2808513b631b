"""Derivation and validation of the explicit constant chain.

From an input triple ``(n, eps1, eta)`` — dimension, flatness threshold and
improvement factor of the dyadic decay inequality — every constant of the
certification pipeline is derived in exact base-2 log arithmetic:

* ``alpha = -log2(1 - eta)`` and ``gamma = 1/(1 - alpha)``,
* the six pipeline coefficients (graph modulus, dead-zone reach, sandwich
  gap, touching slack, barrier lift, harmonic closeness),
* the certified improvement radius ``2**-16 / n**2``,
* the flatness threshold ``(radius/(8*closeness))**(8/(gamma*alpha**2))``,
  which underflows any double, and the ladder of epsilon-thresholds that
  each stage of the pipeline assumes.

All quantities live in :class:`~flatcert.precision.LogValue`; the module also
checks the closed-form identity for the flatness threshold and the
monotonicity of the threshold ladder.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

from mpmath import mp, mpf

from .precision import LogValue, log2_mpf, to_mpf, working_digits

__all__ = [
    "HarnackParams",
    "ConstantLedger",
    "ChainLink",
    "ChainReport",
    "HarnackDepth",
    "derive_ledger",
    "check_threshold_chain",
    "max_harnack_depth",
    "ledger_to_json",
]

# crude caps under which the derivation is stated
EPS1_CAP = Fraction(1, 4)
ETA_CAP = Fraction(1, 5)

# relative mismatch allowed between the two routes to the flatness threshold;
# at >= 60 working digits the actual mismatch is ~1e-55 or better
IDENTITY_RTOL = 1e-12

_CHAIN_TOL = mpf("1e-30")


def _as_number(x) -> float:
    if isinstance(x, Fraction):
        return float(x)
    return float(x)


@dataclass(frozen=True)
class HarnackParams:
    """Input triple of the dyadic decay inequality.

    ``eps1`` is the flatness level below which the decay applies and ``eta``
    the per-halving improvement factor.  Values may be floats or exact
    ``Fraction``s; ``alpha_exact`` pins ``alpha = -log2(1-eta)`` to an exact
    rational when the instance was built through :meth:`from_alpha`.
    """

    n: int
    eps1: float | Fraction
    eta: float | Fraction
    alpha_exact: Fraction | None = None

    def __post_init__(self):
        if not isinstance(self.n, int) or self.n < 2:
            raise ValueError(f"dimension n must be an integer >= 2, got {self.n}")
        if not self._in_cap(self.eps1, EPS1_CAP):
            raise ValueError(f"eps1 must lie in (0, 1/4], got {self.eps1}")
        if not self._in_cap(self.eta, ETA_CAP):
            raise ValueError(f"eta must lie in (0, 1/5], got {self.eta}")

    @staticmethod
    def _in_cap(value, cap: Fraction) -> bool:
        # floats compare against the rounded cap so 0.2 counts as 1/5
        if isinstance(value, Fraction):
            return 0 < value <= cap
        return 0 < value <= float(cap)

    @classmethod
    def from_alpha(cls, n: int, eps1, alpha: Fraction | float) -> "HarnackParams":
        """Build params from an exact decay exponent; eta = 1 - 2**-alpha."""
        alpha_frac = alpha if isinstance(alpha, Fraction) else Fraction(alpha).limit_denominator(10**9)
        if alpha_frac <= 0:
            raise ValueError(f"alpha must be positive, got {alpha}")
        with mp.workdps(working_digits()):
            eta_val = 1 - mp.power(2, -to_mpf(alpha_frac))
            if eta_val > to_mpf(ETA_CAP) * (1 + mpf("1e-30")):
                raise ValueError(f"alpha={alpha} implies eta > 1/5")
            eta = float(eta_val)
        return cls(n=n, eps1=eps1, eta=eta, alpha_exact=alpha_frac)


@dataclass(frozen=True)
class ChainLink:
    """One inequality of the threshold ladder, with its log-space margin."""

    name: str
    lhs_log2: float
    rhs_log2: float
    margin_log2: float
    ok: bool


@dataclass(frozen=True)
class ChainReport:
    links: tuple[ChainLink, ...]
    alpha_warning: bool
    passed: bool

    def rows(self) -> list[tuple[str, float, bool]]:
        """Ordered (name, log2 margin, verdict) view of the ladder."""
        return [(l.name, l.margin_log2, l.ok) for l in self.links]


@dataclass(frozen=True)
class HarnackDepth:
    """Maximal dyadic depth reachable from flatness ``eps``.

    ``m_value`` solves ``2**m * eps * (1-eta)**(m-3) = eps1`` exactly and
    ``mtilde`` is its floor.  The scale bound compares ``2**(-mtilde-1)``
    against ``modulus_reach * eps**gamma``; the two sides coincide exactly at
    ``m_value`` itself, so flooring can cost up to one halving.
    ``scale_bound_ok`` certifies the bound with that factor-2 slack,
    ``scale_bound_strict_ok`` reports the slack-free comparison (true only
    when ``m_value`` is an integer).
    """

    m_value: float
    mtilde: int
    scale_lhs_log2: float
    scale_rhs_log2: float
    scale_bound_ok: bool
    scale_bound_strict_ok: bool


@dataclass(frozen=True)
class ConstantLedger:
    """Every derived constant of the pipeline, in exact log2 form.

    Constants (value = coefficient times the indicated power of eps):

    ==================  ============================================  =================
    field               closed form                                   multiplies
    ==================  ============================================  =================
    modulus_coeff       2**(4+4a)                                     |x-y|**alpha
    modulus_reach       2**(3a/(1-a)-1) * eps1**-g                    eps**gamma
    sandwich_gap        2**(4+5a) * eps1**(-g*a)                      eps**(1+g*a)
    touch_slack         2**(8+5a) * n * eps1**(-g*a)                  eps**(g*a/2)
    barrier_lift        2**(10+5a) * n * eps1**(-g*a/2)               r**(a/2)
    closeness_coeff     2**(14+5a) * n * eps1**(-g*a)                 eps**(g*a**2/8)
    radius              2**-16 / n**2                                 --
    flatness_threshold  (radius/(8*closeness))**(8/(g*a**2))          --
    ==================  ============================================  =================

    with ``a = alpha``, ``g = gamma``.  ``thresholds`` is the ordered ladder
    of flatness levels each pipeline stage assumes: ``harnack`` (eps1/8),
    ``touch``, ``grad``, ``barrier`` and ``final``.
    """

    params: HarnackParams
    digits: int
    alpha: mpf
    gamma: mpf
    alpha_fraction: Fraction | None
    gamma_fraction: Fraction | None
    modulus_coeff: LogValue
    modulus_reach: LogValue
    sandwich_gap: LogValue
    touch_slack: LogValue
    barrier_lift: LogValue
    closeness_coeff: LogValue
    radius: LogValue
    flatness_threshold: LogValue
    thresholds: tuple[tuple[str, LogValue], ...]
    alpha_warning: bool
    identity_rel_err: float
    eps0_exponent: Fraction | mpf = field(repr=False, default=None)

    def threshold(self, name: str) -> LogValue:
        for key, value in self.thresholds:
            if key == name:
                return value
        raise KeyError(name)

    # float views of the coefficients, for grid-scale arithmetic
    def coeff_float(self, name: str) -> float:
        return getattr(self, name).to_float()

    def eps_power(self, name: str, eps: float, exponent) -> float:
        """coefficient(name) * eps**exponent as a double, computed in log space."""
        lv = getattr(self, name)
        with mp.workdps(self.digits):
            log2 = lv.log2 + to_mpf(exponent) * log2_mpf(eps)
        return LogValue(log2).to_float()


def derive_ledger(params: HarnackParams, digits: int | None = None) -> ConstantLedger:
    """Derive the full constant ledger from the input triple.

    Raises ``ValueError`` on parameter-range violations and on failure of the
    internal closed-form identity for the flatness threshold (which would
    indicate a derivation bug, not bad input).
    """
    digits = working_digits(digits)
    with mp.workdps(digits):
        if params.alpha_exact is not None:
            alpha = to_mpf(params.alpha_exact)
            alpha_fraction = params.alpha_exact
        else:
            alpha = -log2_mpf(1 - to_mpf(params.eta))
            alpha_fraction = None
        if alpha >= 1:
            raise ValueError(f"decay exponent alpha={float(alpha)} >= 1; gamma undefined")
        gamma = 1 / (1 - alpha)
        gamma_fraction = (
            1 / (1 - alpha_fraction) if alpha_fraction is not None else None
        )
        alpha_warning = bool(alpha > mpf(1) / 4)

        log_eps1 = log2_mpf(params.eps1)
        log_n = log2_mpf(params.n)
        ga = gamma * alpha

        c_modulus = LogValue(4 + 4 * alpha)
        c_reach = LogValue(3 * alpha / (1 - alpha) - 1 - gamma * log_eps1)
        c_sandwich = LogValue(4 + 5 * alpha - ga * log_eps1)
        c_touch = LogValue(8 + 5 * alpha + log_n - ga * log_eps1)
        c_lift = LogValue(10 + 5 * alpha + log_n - (ga / 2) * log_eps1)
        c_close = LogValue(14 + 5 * alpha + log_n - ga * log_eps1)
        radius = LogValue(-16 - 2 * log_n)

        if alpha_fraction is not None:
            eps0_exponent: Fraction | mpf = 8 / (gamma_fraction * alpha_fraction**2)
        else:
            eps0_exponent = 8 / (ga * alpha)
        exp_mpf = to_mpf(eps0_exponent)

        eps0 = LogValue(exp_mpf * (radius.log2 - 3 - c_close.log2))
        eps0_closed = LogValue(exp_mpf * (ga * log_eps1 - 33 - 5 * alpha - 3 * log_n))
        rel_err = float(abs(eps0.log2 - eps0_closed.log2) / abs(eps0.log2))
        if rel_err > IDENTITY_RTOL:
            raise ValueError(
                f"flatness-threshold identity violated: relative error {rel_err}"
            )

        thresholds = (
            ("harnack", LogValue(log_eps1 - 3)),
            ("touch", LogValue((2 / (1 + ga)) * (-6 - 5 * alpha + ga * log_eps1))),
            ("grad", LogValue((4 / (2 + 3 * ga)) * (-6 - 5 * alpha + ga * log_eps1))),
            (
                "barrier",
                LogValue((2 / (1 - ga)) * (-18 - 5 * alpha - 5 * log_n + ga * log_eps1)),
            ),
            ("final", LogValue((1 / ga) * (radius.log2 - 3 - c_sandwich.log2))),
        )

        # identities guaranteed by the alpha <= 1/4 reading; checked, not assumed
        if not alpha_warning:
            if c_reach.log2 > -gamma * log_eps1 + _CHAIN_TOL:
                raise ValueError("modulus_reach exceeds eps1**-gamma despite alpha <= 1/4")
            if ga / 4 > mpf(1) / 12 + _CHAIN_TOL:
                raise ValueError("gamma*alpha/4 exceeds 1/12 despite alpha <= 1/4")

    return ConstantLedger(
        params=params,
        digits=digits,
        alpha=alpha,
        gamma=gamma,
        alpha_fraction=alpha_fraction,
        gamma_fraction=gamma_fraction,
        modulus_coeff=c_modulus,
        modulus_reach=c_reach,
        sandwich_gap=c_sandwich,
        touch_slack=c_touch,
        barrier_lift=c_lift,
        closeness_coeff=c_close,
        radius=radius,
        flatness_threshold=eps0,
        thresholds=thresholds,
        alpha_warning=alpha_warning,
        identity_rel_err=rel_err,
        eps0_exponent=eps0_exponent,
    )


def check_threshold_chain(ledger: ConstantLedger) -> ChainReport:
    """Verify monotonicity of the threshold ladder in log space.

    Violations are reported with their margins, never raised; the overall
    verdict is the conjunction of the individual links.
    """
    eps0 = ledger.flatness_threshold

    def link(name, lhs: LogValue, rhs: LogValue) -> ChainLink:
        margin = rhs.log2 - lhs.log2
        return ChainLink(
            name=name,
            lhs_log2=float(lhs.log2),
            rhs_log2=float(rhs.log2),
            margin_log2=float(margin),
            ok=bool(margin >= -_CHAIN_TOL),
        )

    links = (
        link("flatness_threshold <= barrier", eps0, ledger.threshold("barrier")),
        link("barrier <= touch", ledger.threshold("barrier"), ledger.threshold("touch")),
        link("touch <= grad", ledger.threshold("touch"), ledger.threshold("grad")),
        link("flatness_threshold <= final", eps0, ledger.threshold("final")),
        link("flatness_threshold <= harnack", eps0, ledger.threshold("harnack")),
    )
    return ChainReport(
        links=links,
        alpha_warning=ledger.alpha_warning,
        passed=all(l.ok for l in links),
    )


def max_harnack_depth(eps: float, params: HarnackParams, digits: int | None = None) -> HarnackDepth:
    """Depth of the dyadic decay iteration available at flatness ``eps``.

    Requires ``0 < eps <= eps1/8``.  The returned depth satisfies the
    defining inequality at ``mtilde`` and violates it at ``mtilde + 1``
    (checked internally).
    """
    digits = working_digits(digits)
    ledger = derive_ledger(params, digits)
    with mp.workdps(digits):
        eps_m = to_mpf(eps)
        eps1_m = to_mpf(params.eps1)
        if not 0 < eps_m <= eps1_m / 8 * (1 + _CHAIN_TOL):
            raise ValueError(f"eps must lie in (0, eps1/8], got {eps}")
        alpha, gamma = ledger.alpha, ledger.gamma
        log_ratio = log2_mpf(params.eps1) - log2_mpf(eps)
        m_value = gamma * (log_ratio - 3 * alpha)
        mtilde = int(mp.floor(m_value + _CHAIN_TOL))

        def condition(m: int) -> bool:
            # 2**m * eps * (1-eta)**(m-3) <= eps1, in log space
            return m * (1 - alpha) <= log_ratio - 3 * alpha + _CHAIN_TOL

        if not condition(mtilde) or condition(mtilde + 1):
            raise AssertionError("depth consistency violated (derivation bug)")

        scale_lhs = mpf(-(mtilde + 1))
        scale_rhs = ledger.modulus_reach.log2 + gamma * log2_mpf(eps)
        return HarnackDepth(
            m_value=float(m_value),
            mtilde=mtilde,
            scale_lhs_log2=float(scale_lhs),
            scale_rhs_log2=float(scale_rhs),
            scale_bound_ok=bool(scale_lhs <= scale_rhs + 1 + _CHAIN_TOL),
            scale_bound_strict_ok=bool(scale_lhs <= scale_rhs + _CHAIN_TOL),
        )


def ledger_to_json(ledger: ConstantLedger, chain: ChainReport | None = None) -> dict:
    """JSON-ready view: each constant as ``{log2: decimal string, approx: ...}``."""
    if chain is None:
        chain = check_threshold_chain(ledger)

    def pair(lv: LogValue) -> dict:
        return {"log2": lv.log2_str(), "approx": lv.approx()}

    constants = {
        name: pair(getattr(ledger, name))
        for name in (
            "modulus_coeff",
            "modulus_reach",
            "sandwich_gap",
            "touch_slack",
            "barrier_lift",
            "closeness_coeff",
            "radius",
            "flatness_threshold",
        )
    }
    return {
        "n": ledger.params.n,
        "eps1": _as_number(ledger.params.eps1),
        "eta": _as_number(ledger.params.eta),
        "alpha": float(ledger.alpha),
        "gamma": float(ledger.gamma),
        "alpha_warning": ledger.alpha_warning,
        "digits": ledger.digits,
        "constants": constants,
        "thresholds": [
            {"name": name, **pair(value)} for name, value in ledger.thresholds
        ],
        "chain": [
            {
                "name": l.name,
                "lhs_log2": l.lhs_log2,
                "rhs_log2": l.rhs_log2,
                "margin_log2": l.margin_log2,
                "ok": l.ok,
            }
            for l in chain.links
        ],
        "passed": chain.passed,
    }

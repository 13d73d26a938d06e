"""Non-entangling channel decomposition of the two-packet problem.

The heavy packet, too broad to satisfy m_x sigma_x^2 = m_y sigma_y^2 on its
own, is written as a Gaussian blur (width dsigma_y0) of narrower packets
(width sigma_yT = eps sigma_x) that do satisfy it.  Each blurred component is
a channel whose collisions never create cross terms, so the two-particle
state at any between-collision instant is a single Gaussian integral over the
classical channel distribution:

    centre line   x_m - x_M(t) = (sin(2 eps n)/eps) (y_m0 - y_M0)
                  y_m - y_M(t) =  cos(2 eps n)      (y_m0 - y_M0)
    y-width       dsigma_y0 |cos(2 eps n)|

Integrating the channel superposition in closed form gives back a quadratic
form whose cross coefficient

    a_xy = sin(4 eps n) [beta_y^2 - eps^2 beta_x^2] / (2 eps beta_x^2 beta_y^2)

vanishes at n = 0 and again at the critical count pi/(4 eps): the
entanglement built up by the collisions disappears when they stop.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass

import numpy as np

from . import classical
from .classical import (ClassicalTrajectory, closed_form_velocities,
                        collision_table, critical_count,
                        event_driven_trajectory, max_collisions)
from .gaussian import (GaussianPacket, MassPair, QuadraticFormState,
                       normalized, width_param)

# widths must stay below this fraction of every relevant distance
WIDTH_RATIO_GATE = 0.05


class MixedPhaseError(ValueError):
    """Requested instant has channels straddling a collision or wall bounce."""

    def __init__(self, t: float, before: float | None, after: float | None):
        self.t = t
        self.safe_before = before
        self.safe_after = after
        msg = f"t={t:g} is not a whole-ensemble between-collision instant"
        if before is not None or after is not None:
            msg += f" (nearest safe instants: {before:g} and {after:g})"
        super().__init__(msg)


@dataclass(frozen=True)
class ScenarioParams:
    """Initial configuration: two narrow packets, the light one moving.

    Requires 0 < x_M0 < y_M0, widths at most WIDTH_RATIO_GATE of every
    packet-to-packet and packet-to-wall distance, and the broad-heavy branch
    m_x sigma0x^2 < m_y sigma0y^2.  validity_figure = eps m_x sigma0x v_x0 / pi
    must be large for the packets to stay narrow through the last collision.
    """

    x_M0: float
    y_M0: float
    sigma0x: float
    sigma0y: float
    p_x0: float
    masses: MassPair

    def __post_init__(self):
        if not 0 < self.x_M0 < self.y_M0:
            raise ValueError("need 0 < x_M0 < y_M0")
        if self.p_x0 <= 0:
            raise ValueError("p_x0 must be positive")
        if self.sigma0x <= 0 or self.sigma0y <= 0:
            raise ValueError("widths must be positive")
        gap = min(self.x_M0, self.y_M0 - self.x_M0, self.y_M0)
        for name, s in (("sigma0x", self.sigma0x), ("sigma0y", self.sigma0y)):
            if s > WIDTH_RATIO_GATE * gap:
                raise ValueError(
                    f"{name}={s:g} too broad: widths must be <= "
                    f"{WIDTH_RATIO_GATE} * {gap:g}")
        if self.masses.m_x * self.sigma0x**2 >= self.masses.m_y * self.sigma0y**2:
            raise ValueError(
                "m_x sigma0x^2 < m_y sigma0y^2 required (the mirrored "
                "decomposition for the opposite branch is not implemented)")

    @property
    def eps(self) -> float:
        return self.masses.epsilon

    @property
    def v_x0(self) -> float:
        return self.p_x0 / self.masses.m_x

    @property
    def validity_figure(self) -> float:
        return self.eps * self.masses.m_x * self.sigma0x * self.v_x0 / math.pi

    @property
    def n_max(self) -> int:
        return max_collisions(self.eps)

    @property
    def n_cr(self) -> float:
        return critical_count(self.eps)

    def packet_x(self) -> GaussianPacket:
        return GaussianPacket.initial(self.x_M0, self.sigma0x, self.p_x0,
                                      self.masses.m_x)

    def packet_y(self) -> GaussianPacket:
        return GaussianPacket.initial(self.y_M0, self.sigma0y, 0.0,
                                      self.masses.m_y)


def split_width(params: ScenarioParams) -> tuple[float, float]:
    """Split sigma0y^2 into the channel blur and the channel packet width.

    sigma_yT^2 = (m_x/m_y) sigma0x^2 makes each channel non-entangling;
    dsigma_y0^2 = sigma0y^2 - sigma_yT^2 is the blur the channels' centres
    are distributed with.  Convolving the two Gaussians restores sigma0y.
    """
    sigma_yT_sq = params.masses.m_x / params.masses.m_y * params.sigma0x**2
    dsq = params.sigma0y**2 - sigma_yT_sq
    if dsq <= 0:
        raise ValueError("already non-entangling (single channel): "
                         "m_x sigma0x^2 >= m_y sigma0y^2 leaves no blur to split off")
    return math.sqrt(dsq), math.sqrt(sigma_yT_sq)


@dataclass(frozen=True)
class ChannelEnsemble:
    """Classical distribution over channel centres at one instant.

    The centres sit on the line x_m = x_center + slope (y_m - y_center) with
    a Gaussian of width dsigma_y_n along y_m; slope = tan(2 eps n)/eps.
    p_xn carries the light particle's direction via sign_x.
    """

    n: float
    x_center: float
    y_center: float
    dsigma_y_n: float
    slope: float
    p_xn: float
    p_yn: float
    sign_x: int
    t: float


@dataclass(frozen=True)
class EntanglementReport:
    a_xy: complex
    purity: float
    schmidt_entropy: float


def initial_ensemble(params: ScenarioParams) -> ChannelEnsemble:
    """Ensemble at t = 0: a delta in x_m times a Gaussian in y_m."""
    dsigma_y0, _ = split_width(params)
    return ChannelEnsemble(n=0, x_center=params.x_M0, y_center=params.y_M0,
                           dsigma_y_n=dsigma_y0, slope=0.0, p_xn=params.p_x0,
                           p_yn=0.0, sign_x=+1, t=0.0)


@functools.lru_cache(maxsize=32)
def reference_trajectory(params: ScenarioParams) -> ClassicalTrajectory:
    """Exact event-driven run from the packet centres (cached per scenario)."""
    return event_driven_trajectory(params.x_M0, params.y_M0, params.v_x0,
                                   params.masses)


def _channel_phase(params: ScenarioParams, y_m0: float, t: float) -> tuple[int, int]:
    """Exact (pair, wall) event counts of one channel at time t."""
    table = collision_table(params.eps)
    _, _, n, w = classical.channel_kinematics(t, np.array([y_m0]), params.x_M0,
                                              params.v_x0, table)
    return int(n[0]), int(w[0])


def mixed_phase_gate(e: ChannelEnsemble, params: ScenarioParams, t: float) -> bool:
    """True when the +-3 sigma span of channels shares one collision count at t.

    Exact per-channel counting at the span endpoints (counts are monotone in
    the initial offset, so the endpoints decide).  Wall proximity is a
    separate concern handled by the schedule: use auto_schedule to sample
    midway between consecutive events.
    """
    dsigma_y0, _ = split_width(params)
    lo = _channel_phase(params, params.y_M0 - 3 * dsigma_y0, t)
    hi = _channel_phase(params, params.y_M0 + 3 * dsigma_y0, t)
    return lo[0] == hi[0]


def auto_schedule(params: ScenarioParams) -> list[float]:
    """Safe reporting instants: midpoints of the reference event intervals.

    Uses all events (wall bounces included) so the light packet is never
    sampled on top of the wall, plus one tail instant after the final event.
    """
    traj = reference_trajectory(params)
    ts = [0.0] + [e.t for e in traj.events]
    out = [(a + b) / 2 for a, b in zip(ts[:-1], ts[1:])]
    if len(ts) > 1:
        out.append(ts[-1] + (ts[-1] - ts[-2]) / 2)
    return out


def nearest_safe_instants(params: ScenarioParams, t: float) -> tuple[float | None, float | None]:
    """Closest auto-schedule instants before and after t."""
    sched = auto_schedule(params)
    before = max((s for s in sched if s <= t), default=None)
    after = min((s for s in sched if s > t), default=None)
    return before, after


def propagate_ensemble(e: ChannelEnsemble, params: ScenarioParams,
                       t: float) -> ChannelEnsemble:
    """Ensemble parameters at a later between-collision instant.

    Collision count and centres come from the exact reference trajectory,
    momenta from the closed-form speeds, width and slope from the rotation
    law at the current count.  Raises MixedPhaseError when channels straddle
    an event at t.
    """
    if t < e.t:
        raise ValueError("cannot propagate backwards")
    if not mixed_phase_gate(e, params, t):
        before, after = nearest_safe_instants(params, t)
        raise MixedPhaseError(t, before, after)
    traj = reference_trajectory(params)
    ref = traj.state_at(t)
    n = ref.n
    eps = params.eps
    dsigma_y0, _ = split_width(params)
    sign = +1 if ref.v_x >= 0 else -1
    if n <= params.n_max:
        v_x, v_y = closed_form_velocities(n, eps, params.v_x0)
        p_xn = sign * params.masses.m_x * v_x
        p_yn = params.masses.m_y * v_y
    else:
        # past the final collision the folded closed forms no longer apply
        p_xn = params.masses.m_x * ref.v_x
        p_yn = params.masses.m_y * ref.v_y
    return ChannelEnsemble(
        n=n, x_center=ref.x, y_center=ref.y,
        dsigma_y_n=dsigma_y0 * abs(math.cos(2 * eps * n)),
        slope=math.tan(2 * eps * n) / eps,
        p_xn=p_xn, p_yn=p_yn,
        sign_x=sign, t=t)


def ensemble_at_count(params: ScenarioParams, n, t: float,
                      sign_x: int = +1) -> ChannelEnsemble:
    """Ensemble at a prescribed (possibly fractional) collision count.

    Continuum evaluation of the rotation laws, used to probe the critical
    count pi/(4 eps) which falls between integer collision indices; centres
    are placed on the asymptotic reference so entanglement quantities, which
    do not depend on them, are evaluated at physically sensible positions.
    """
    eps = params.eps
    dsigma_y0, _ = split_width(params)
    n_eff = min(n, params.n_max)
    v_x, v_y = closed_form_velocities(n_eff, eps, params.v_x0)
    y_c = classical.collision_position_approx(n_eff, params.y_M0, eps)
    return ChannelEnsemble(
        n=n, x_center=y_c / 2, y_center=y_c,
        dsigma_y_n=dsigma_y0 * abs(math.cos(2 * eps * n)),
        slope=math.tan(2 * eps * n) / eps,
        p_xn=sign_x * params.masses.m_x * v_x,
        p_yn=params.masses.m_y * v_y,
        sign_x=sign_x, t=t)


def _betas(params: ScenarioParams, t: float) -> tuple[complex, complex]:
    """Width parameters (beta_x^2, beta_y^2) of the original packets at t."""
    bx = width_param(params.sigma0x, params.masses.m_x, t)
    by = width_param(params.sigma0y, params.masses.m_y, t)
    return bx, by


def assemble_quadratic_form(e: ChannelEnsemble, params: ScenarioParams,
                            check_gate: bool = True) -> QuadraticFormState:
    """Two-particle quadratic form from the channel superposition at e.t.

    The Gaussian channel integral is done in closed form in the initial
    offset w = y_m0 - y_M0, which stays regular through the width zero at
    the critical count.  The result is normalized.
    """
    if check_gate and not mixed_phase_gate(e, params, e.t):
        before, after = nearest_safe_instants(params, e.t)
        raise MixedPhaseError(e.t, before, after)
    eps = params.eps
    dsigma_y0, _ = split_width(params)
    d0sq = dsigma_y0**2
    bx2, _ = _betas(params, e.t)
    bt2 = eps**2 * bx2                      # channel heavy width parameter
    fx = math.sin(2 * eps * e.n) / eps      # offset-to-x_m scale
    fy = math.cos(2 * eps * e.n)            # offset-to-y_m scale
    p, q = 1 / bx2, 1 / bt2
    alpha = -(1 / (2 * d0sq) + fx * fx * p / 2 + fy * fy * q / 2)
    lam_x, lam_y = fx * p, fy * q
    lam_1 = -fx * p * e.x_center - fy * q * e.y_center
    denom = -4 * alpha
    state = QuadraticFormState(
        a_xx=-p / 2 + lam_x * lam_x / denom,
        a_yy=-q / 2 + lam_y * lam_y / denom,
        a_xy=2 * lam_x * lam_y / denom,
        b_x=p * e.x_center + 1j * e.p_xn + 2 * lam_x * lam_1 / denom,
        b_y=q * e.y_center + 1j * e.p_yn + 2 * lam_y * lam_1 / denom,
        log_norm=(-p * e.x_center**2 / 2 - q * e.y_center**2 / 2
                  + lam_1 * lam_1 / denom),
    )
    return normalized(state)


def axy_formula(n, eps: float, beta_x_sq: complex, beta_y_sq: complex) -> complex:
    """Cross coefficient sin(4 eps n)[beta_y^2 - eps^2 beta_x^2]/(2 eps beta_x^2 beta_y^2).

    Equals the channel integral's cross coefficient identically; zero at
    n = 0 and at the critical count where 4 eps n = pi.
    """
    return (math.sin(4 * eps * n) * (beta_y_sq - eps**2 * beta_x_sq)
            / (2 * eps * beta_x_sq * beta_y_sq))


def axx_formula(n, eps: float, beta_x_sq: complex, beta_y_sq: complex) -> complex:
    """Diagonal x coefficient of the assembled form."""
    c, s = math.cos(2 * eps * n), math.sin(2 * eps * n)
    return -(c * c / (2 * beta_x_sq) + s * s * eps**2 / (2 * beta_y_sq))


def ayy_formula(n, eps: float, beta_x_sq: complex, beta_y_sq: complex) -> complex:
    """Diagonal y coefficient of the assembled form."""
    c, s = math.cos(2 * eps * n), math.sin(2 * eps * n)
    return -(c * c / (2 * beta_y_sq) + s * s / (2 * eps**2 * beta_x_sq))


def energy_exchange_check(t: float, params: ScenarioParams,
                          rtol: float = 1e-8) -> bool:
    """At the critical count the diagonal coefficients swap roles.

    Checks a_xx(n_cr) = -eps^2/(2 beta_y^2) and a_yy(n_cr) = -1/(2 eps^2
    beta_x^2): the packets have exchanged the kinetic energies stored in
    their rest-frame momentum spreads.
    """
    eps = params.eps
    e = ensemble_at_count(params, params.n_cr, t)
    state = assemble_quadratic_form(e, params, check_gate=False)
    bx2, by2 = _betas(params, t)
    want_xx = -eps**2 / (2 * by2)
    want_yy = -1 / (2 * eps**2 * bx2)
    return (abs(state.a_xx - want_xx) <= rtol * abs(want_xx)
            and abs(state.a_yy - want_yy) <= rtol * abs(want_yy))


def purity_from_coefficients(a_xx: complex, a_yy: complex, a_xy: complex) -> float:
    """Closed-form purity of the reduced x state of a pure Gaussian pair.

    With A = -2 Re a_xx, D = -2 Re a_yy, g = a_xy the four-fold Gaussian
    integral for Tr rho_x^2 collapses to sqrt[(AD - (Re g)^2)/(AD + (Im g)^2)].
    Displacements and global phase drop out.
    """
    a = -2 * complex(a_xx).real
    d = -2 * complex(a_yy).real
    g = complex(a_xy)
    num = a * d - g.real**2
    if a <= 0 or d <= 0 or num <= 0:
        raise ValueError("state is not normalizable")
    return math.sqrt(num / (a * d + g.imag**2))


def schmidt_entropy_from_purity(purity: float) -> float:
    """Entropy of the geometric Schmidt spectrum with the given purity."""
    if not 0 < purity <= 1:
        raise ValueError("purity must lie in (0, 1]")
    lam = (1 - purity) / (1 + purity)
    if lam <= 0:
        return 0.0
    return -math.log(1 - lam) - lam * math.log(lam) / (1 - lam)


def entanglement_report(state: QuadraticFormState) -> EntanglementReport:
    """Cross coefficient, purity and Schmidt entropy of a pure Gaussian pair."""
    purity = purity_from_coefficients(state.a_xx, state.a_yy, state.a_xy)
    return EntanglementReport(a_xy=state.a_xy, purity=purity,
                              schmidt_entropy=schmidt_entropy_from_purity(purity))


def composed_marginal_variances(params: ScenarioParams, n, t: float) -> tuple[float, float]:
    """Marginal position variances predicted by the coherent channel sum.

    The incoherent guess (classical spread plus single-packet width) is wrong
    because channels interfere; carrying the interference through the
    Gaussian integrals gives, with B = beta_x^2, E = beta_y^2, s2 = sigma0y^2,

        Var_y = |E|^2 [c^2 d0^2 Re(BE) + e2] / (2 s2 [d0^2 Re(BE) + e2])
        Var_x = |E|^2 [s^2 d0^2 Re(BE) + e2] / (2 eps^2 s2 [d0^2 Re(BE) + e2])

    where e2 = eps^2 |B|^2 s2 and (c, s) = (cos, sin)(2 eps n).
    """
    eps = params.eps
    dsigma_y0, _ = split_width(params)
    d0sq = dsigma_y0**2
    bb, ee = _betas(params, t)
    c, s = math.cos(2 * eps * n), math.sin(2 * eps * n)
    re_be = (bb * ee).real
    s2 = params.sigma0y**2
    e2 = eps**2 * abs(bb) ** 2 * s2
    common = d0sq * re_be + e2
    var_y = abs(ee) ** 2 * (c * c * d0sq * re_be + e2) / (2 * s2 * common)
    var_x = abs(ee) ** 2 * (s * s * d0sq * re_be + e2) / (2 * eps**2 * s2 * common)
    return var_x, var_y

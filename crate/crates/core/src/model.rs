//! Dimensionless model of two identical adiabatic CSTRs in series.
//!
//! Each reactor carries a single state, the conversion degree `alpha`. Because
//! the reactors are adiabatic, the dimensionless temperature equals the
//! conversion, so no separate heat balance is integrated. The feed entering the
//! cascade is always fresh (conversion 0).

use crate::error::{Error, Result};

/// Values this far outside `[0, 1]` are treated as integration round-off and clamped.
pub const CLAMP_SLACK: f64 = 1e-12;

/// Kinetic and thermal constants of the cascade.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParams {
    /// Activation-energy number `E / (R T0)`.
    pub gamma: f64,
    /// Adiabatic temperature-rise number `(-dH) C_A0 / (T0 rho c_p)`.
    pub beta: f64,
    /// Reaction order.
    pub n: f64,
}

impl ModelParams {
    pub fn new(gamma: f64, beta: f64, n: f64) -> Result<Self> {
        for (name, value) in [("gamma", gamma), ("beta", beta), ("n", n)] {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::Domain { name, value });
            }
        }
        Ok(Self { gamma, beta, n })
    }

    /// Arrhenius-type factor `exp(gamma * beta * alpha / (1 + beta * alpha))`.
    #[inline]
    fn arrhenius(&self, alpha: f64) -> f64 {
        (self.gamma * self.beta * alpha / (1.0 + self.beta * alpha)).exp()
    }
}

impl Default for ModelParams {
    fn default() -> Self {
        Self {
            gamma: 15.0,
            beta: 0.65,
            n: 1.5,
        }
    }
}

/// Damköhler number, the bifurcation parameter.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Damkohler(f64);

impl Damkohler {
    pub fn new(da: f64) -> Result<Self> {
        if da.is_finite() && da >= 0.0 {
            Ok(Self(da))
        } else {
            Err(Error::Domain {
                name: "Da",
                value: da,
            })
        }
    }

    #[inline]
    pub fn value(self) -> f64 {
        self.0
    }
}

/// Direction of the feed through the cascade.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FlowDirection {
    /// `IO = 0`: CSTR 1 -> CSTR 2, the outlet is reactor 2.
    Forward,
    /// `IO = 1`: CSTR 2 -> CSTR 1, the outlet is reactor 1.
    Reverse,
}

impl FlowDirection {
    pub fn from_io(io: u8) -> Result<Self> {
        match io {
            0 => Ok(Self::Forward),
            1 => Ok(Self::Reverse),
            other => Err(Error::InvalidParameter(format!(
                "io must be 0 or 1, got {other}"
            ))),
        }
    }

    /// Direction of cycle `j` under periodic reversal: forward on even cycles.
    pub fn for_cycle(j: usize) -> Self {
        if j.is_multiple_of(2) {
            Self::Forward
        } else {
            Self::Reverse
        }
    }

    #[inline]
    pub fn io(self) -> f64 {
        match self {
            Self::Forward => 0.0,
            Self::Reverse => 1.0,
        }
    }

    pub fn as_u8(self) -> u8 {
        match self {
            Self::Forward => 0,
            Self::Reverse => 1,
        }
    }

    pub fn toggled(self) -> Self {
        match self {
            Self::Forward => Self::Reverse,
            Self::Reverse => Self::Forward,
        }
    }
}

/// Phase of a flow-reversal cycle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Phase {
    /// Both reactors in series along the current flow direction.
    Series,
    /// The outlet reactor is cut off (batch) and product is drawn from the fed reactor.
    Relaxing,
}

impl Phase {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Series => "series",
            Self::Relaxing => "relaxing",
        }
    }
}

/// Conversion degrees of both reactors; the complete dynamical state.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CascadeState {
    pub alpha1: f64,
    pub alpha2: f64,
}

impl CascadeState {
    pub const fn new(alpha1: f64, alpha2: f64) -> Self {
        Self { alpha1, alpha2 }
    }

    pub fn swap(self) -> Self {
        Self::new(self.alpha2, self.alpha1)
    }

    pub fn to_array(self) -> [f64; 2] {
        [self.alpha1, self.alpha2]
    }

    pub fn from_array(a: [f64; 2]) -> Self {
        Self::new(a[0], a[1])
    }

    pub fn max_abs_diff(self, other: Self) -> f64 {
        (self.alpha1 - other.alpha1)
            .abs()
            .max((self.alpha2 - other.alpha2).abs())
    }

    pub fn in_unit_box(self) -> bool {
        (0.0..=1.0).contains(&self.alpha1) && (0.0..=1.0).contains(&self.alpha2)
    }
}

/// Physical design data from which the dimensionless groups follow.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysicalQuantities {
    /// kJ/kmol
    pub activation_energy: f64,
    /// kJ/(kmol K)
    pub gas_constant: f64,
    /// K
    pub feed_temperature: f64,
    /// kJ/kmol, magnitude of the (exothermic) heat of reaction
    pub heat_of_reaction: f64,
    /// kmol/m^3
    pub feed_concentration: f64,
    /// kg/m^3
    pub density: f64,
    /// kJ/(kg K)
    pub heat_capacity: f64,
    /// m^3/s
    pub volumetric_flow: f64,
    /// m^3
    pub reactor_volume: f64,
    /// 1/s (m^3/kmol)^(n-1)
    pub rate_constant: f64,
    pub order: f64,
}

/// `x^n` for `x >= 0`, avoiding `powf` for integer and half-integer orders.
#[inline]
fn pow_order(x: f64, n: f64) -> f64 {
    let twice = 2.0 * n;
    if twice == twice.trunc() && twice.abs() <= 16.0 {
        let whole = x.powi(n.trunc() as i32);
        if n.fract() == 0.0 {
            whole
        } else if n > 0.0 {
            whole * x.sqrt()
        } else {
            whole / x.sqrt()
        }
    } else {
        x.powf(n)
    }
}

/// Maps `alpha` into `[0, 1]` if it is within [`CLAMP_SLACK`], errors otherwise.
#[inline]
pub fn clamp_conversion(alpha: f64) -> Result<f64> {
    if (0.0..=1.0).contains(&alpha) {
        Ok(alpha)
    } else if (-CLAMP_SLACK..0.0).contains(&alpha) {
        Ok(0.0)
    } else if alpha > 1.0 && alpha <= 1.0 + CLAMP_SLACK {
        Ok(1.0)
    } else {
        Err(Error::Domain {
            name: "alpha",
            value: alpha,
        })
    }
}

/// Reaction term `Da (1 - alpha)^n exp(gamma beta alpha / (1 + beta alpha))`.
#[inline]
pub fn phi(alpha: f64, da: Damkohler, params: &ModelParams) -> Result<f64> {
    let a = clamp_conversion(alpha)?;
    Ok(da.0 * pow_order(1.0 - a, params.n) * params.arrhenius(a))
}

/// `d phi / d alpha`.
pub fn dphi_dalpha(alpha: f64, da: Damkohler, params: &ModelParams) -> Result<f64> {
    let a = clamp_conversion(alpha)?;
    let rest = 1.0 - a;
    if rest == 0.0 {
        if params.n < 1.0 {
            return Err(Error::KineticSingularity {
                alpha: a,
                order: params.n,
            });
        }
        if params.n > 1.0 {
            return Ok(0.0);
        }
    }
    let bracket = -params.n + rest * params.gamma * params.beta / (1.0 + params.beta * a).powi(2);
    Ok(da.0 * pow_order(rest, params.n - 1.0) * bracket * params.arrhenius(a))
}

/// `d phi / d Da`, i.e. `phi / Da`.
pub fn dphi_dda(alpha: f64, params: &ModelParams) -> Result<f64> {
    let a = clamp_conversion(alpha)?;
    Ok(pow_order(1.0 - a, params.n) * params.arrhenius(a))
}

/// Right-hand side of the cascade balances with both reactors in series.
#[inline]
pub fn rhs_series(
    state: CascadeState,
    io: FlowDirection,
    da: Damkohler,
    params: &ModelParams,
) -> Result<CascadeState> {
    let x = io.io();
    Ok(CascadeState::new(
        x * state.alpha2 + phi(state.alpha1, da, params)? - state.alpha1,
        (1.0 - x) * state.alpha1 + phi(state.alpha2, da, params)? - state.alpha2,
    ))
}

/// Right-hand side during relaxation: the outlet reactor of direction `io`
/// runs as a batch, the other reactor is fed fresh and drained directly.
#[inline]
pub fn rhs_relaxation(
    state: CascadeState,
    io: FlowDirection,
    da: Damkohler,
    params: &ModelParams,
) -> Result<CascadeState> {
    let r1 = phi(state.alpha1, da, params)?;
    let r2 = phi(state.alpha2, da, params)?;
    Ok(match io {
        FlowDirection::Reverse => CascadeState::new(r1, r2 - state.alpha2),
        FlowDirection::Forward => CascadeState::new(r1 - state.alpha1, r2),
    })
}

/// Conversion of the stream leaving the cascade.
#[inline]
pub fn alpha_out(state: CascadeState, io: FlowDirection, phase: Phase) -> f64 {
    match (phase, io) {
        (Phase::Series, FlowDirection::Forward) | (Phase::Relaxing, FlowDirection::Reverse) => {
            state.alpha2
        }
        (Phase::Series, FlowDirection::Reverse) | (Phase::Relaxing, FlowDirection::Forward) => {
            state.alpha1
        }
    }
}

/// Dimensionless groups from physical design data. The reference rate is
/// `k C_A0^n` at feed conditions, so `Da = V_R k C_A0^(n-1) / F`.
pub fn derive_dimensionless(phys: &PhysicalQuantities) -> Result<(ModelParams, Damkohler)> {
    let fields = [
        ("activation_energy", phys.activation_energy),
        ("gas_constant", phys.gas_constant),
        ("feed_temperature", phys.feed_temperature),
        ("heat_of_reaction", phys.heat_of_reaction),
        ("feed_concentration", phys.feed_concentration),
        ("density", phys.density),
        ("heat_capacity", phys.heat_capacity),
        ("volumetric_flow", phys.volumetric_flow),
        ("reactor_volume", phys.reactor_volume),
        ("rate_constant", phys.rate_constant),
        ("order", phys.order),
    ];
    for (name, value) in fields {
        if !(value.is_finite() && value > 0.0) {
            return Err(Error::Domain { name, value });
        }
    }
    let gamma = phys.activation_energy / (phys.gas_constant * phys.feed_temperature);
    let beta = phys.heat_of_reaction * phys.feed_concentration
        / (phys.feed_temperature * phys.density * phys.heat_capacity);
    let reference_rate = phys.rate_constant * phys.feed_concentration.powf(phys.order);
    let da =
        phys.reactor_volume * reference_rate / (phys.volumetric_flow * phys.feed_concentration);
    Ok((
        ModelParams::new(gamma, beta, phys.order)?,
        Damkohler::new(da)?,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn da(v: f64) -> Damkohler {
        Damkohler::new(v).unwrap()
    }

    #[test]
    fn phi_at_feed_equals_da() {
        let p = ModelParams::default();
        assert_eq!(phi(0.0, da(0.028), &p).unwrap(), 0.028);
        assert_eq!(phi(1.0, da(0.7), &p).unwrap(), 0.0);
    }

    #[test]
    fn phi_matches_hand_evaluation() {
        // 0.022 * 0.5^1.5 * exp(4.875 / 1.325)
        let v = phi(0.5, da(0.022), &ModelParams::default()).unwrap();
        assert!((v - 0.3081439258468223).abs() < 1e-15);
    }

    #[test]
    fn phi_clamps_round_off_and_rejects_excursions() {
        let p = ModelParams::default();
        assert_eq!(phi(-5e-13, da(0.03), &p).unwrap(), 0.03);
        assert_eq!(phi(1.0 + 5e-13, da(0.03), &p).unwrap(), 0.0);
        assert!(matches!(
            phi(-1e-9, da(0.03), &p),
            Err(Error::Domain { .. })
        ));
        assert!(matches!(
            phi(1.001, da(0.03), &p),
            Err(Error::Domain { .. })
        ));
    }

    #[test]
    fn dphi_dalpha_closed_values() {
        let p = ModelParams::default();
        let v = dphi_dalpha(0.0, da(0.01), &p).unwrap();
        assert!((v - 0.0825).abs() < 1e-15);
        assert_eq!(dphi_dalpha(1.0, da(0.3), &p).unwrap(), 0.0);
    }

    #[test]
    fn dphi_dalpha_matches_central_difference() {
        let p = ModelParams::default();
        let h = 1e-6;
        let fd = (phi(0.3 + h, da(0.028), &p).unwrap() - phi(0.3 - h, da(0.028), &p).unwrap())
            / (2.0 * h);
        let an = dphi_dalpha(0.3, da(0.028), &p).unwrap();
        assert!(((an - fd) / an).abs() < 1e-8, "{an} vs {fd}");
    }

    #[test]
    fn dphi_dalpha_singular_for_fractional_order() {
        let p = ModelParams::new(15.0, 0.65, 0.5).unwrap();
        assert!(matches!(
            dphi_dalpha(1.0, da(0.02), &p),
            Err(Error::KineticSingularity { .. })
        ));
        assert!(dphi_dalpha(0.999, da(0.02), &p).unwrap().is_finite());
    }

    #[test]
    fn dphi_dda_is_rate_per_unit_da() {
        let p = ModelParams::default();
        assert_eq!(dphi_dda(0.0, &p).unwrap(), 1.0);
        assert_eq!(dphi_dda(1.0, &p).unwrap(), 0.0);
        let ratio = phi(0.6, da(0.05), &p).unwrap() / 0.05;
        assert!((dphi_dda(0.6, &p).unwrap() - ratio).abs() < 1e-14 * ratio);
    }

    #[test]
    fn series_rhs_examples() {
        let p = ModelParams::default();
        let d = rhs_series(
            CascadeState::new(0.0, 0.0),
            FlowDirection::Forward,
            da(0.03),
            &p,
        )
        .unwrap();
        assert_eq!(d, CascadeState::new(0.03, 0.03));
        let d = rhs_series(
            CascadeState::new(1.0, 1.0),
            FlowDirection::Forward,
            da(0.05),
            &p,
        )
        .unwrap();
        assert_eq!(d, CascadeState::new(-1.0, 0.0));
    }

    #[test]
    fn relaxation_rhs_examples() {
        let p = ModelParams::default();
        let d = rhs_relaxation(
            CascadeState::new(0.0, 0.0),
            FlowDirection::Reverse,
            da(0.03),
            &p,
        )
        .unwrap();
        assert_eq!(d, CascadeState::new(0.03, 0.03));
        let b = 0.4;
        let d = rhs_relaxation(
            CascadeState::new(1.0, b),
            FlowDirection::Reverse,
            da(0.02),
            &p,
        )
        .unwrap();
        assert_eq!(d.alpha1, 0.0);
        assert_eq!(d.alpha2, phi(b, da(0.02), &p).unwrap() - b);
        let d = rhs_relaxation(
            CascadeState::new(0.2, 0.9),
            FlowDirection::Reverse,
            da(0.0265),
            &p,
        )
        .unwrap();
        assert!(d.alpha1 > 0.0);
        // forward relaxation mirrors reverse
        let s = CascadeState::new(0.3, 0.7);
        let f = rhs_relaxation(s, FlowDirection::Forward, da(0.02), &p).unwrap();
        let r = rhs_relaxation(s.swap(), FlowDirection::Reverse, da(0.02), &p).unwrap();
        assert_eq!(f, r.swap());
    }

    #[test]
    fn outlet_readout() {
        let s = CascadeState::new(0.1, 0.9);
        assert_eq!(alpha_out(s, FlowDirection::Forward, Phase::Series), 0.9);
        assert_eq!(alpha_out(s, FlowDirection::Reverse, Phase::Series), 0.1);
        assert_eq!(alpha_out(s, FlowDirection::Reverse, Phase::Relaxing), 0.9);
        assert_eq!(alpha_out(s, FlowDirection::Forward, Phase::Relaxing), 0.1);
    }

    #[test]
    fn cycle_direction_alternates() {
        assert_eq!(FlowDirection::for_cycle(0), FlowDirection::Forward);
        assert_eq!(FlowDirection::for_cycle(7), FlowDirection::Reverse);
        assert!(FlowDirection::from_io(2).is_err());
    }

    fn reference_plant() -> PhysicalQuantities {
        let r = 8.314;
        let t0 = 400.0;
        let rho = 1000.0;
        let cp = 4.0;
        let ca0 = 2.0;
        PhysicalQuantities {
            activation_energy: 15.0 * r * t0,
            gas_constant: r,
            feed_temperature: t0,
            heat_of_reaction: 0.65 * t0 * rho * cp / ca0,
            feed_concentration: ca0,
            density: rho,
            heat_capacity: cp,
            volumetric_flow: 0.01,
            reactor_volume: 1.0,
            rate_constant: 1e-4,
            order: 1.5,
        }
    }

    #[test]
    fn dimensionless_groups_from_physical_data() {
        let mut phys = reference_plant();
        // Da = V k C^(n-1) / F solved for V at Da = 0.028
        phys.reactor_volume =
            0.028 * phys.volumetric_flow / (phys.rate_constant * phys.feed_concentration.powf(0.5));
        let (params, d) = derive_dimensionless(&phys).unwrap();
        assert!((params.gamma - 15.0).abs() < 1e-12);
        assert!((params.beta - 0.65).abs() < 1e-12);
        assert_eq!(params.n, 1.5);
        assert!((d.value() - 0.028).abs() < 1e-15);

        phys.density = 0.0;
        assert!(derive_dimensionless(&phys).is_err());
    }

    #[test]
    fn order_power_shortcuts_agree_with_powf() {
        for n in [-0.5, 0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 1.3] {
            for x in [0.0, 1e-6, 0.25, 0.7, 1.0] {
                let (a, b) = (pow_order(x, n), x.powf(n));
                assert!(a == b || ((a - b) / b).abs() < 1e-14, "{x}^{n}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn invalid_parameters_rejected() {
        assert!(ModelParams::new(0.0, 0.65, 1.5).is_err());
        assert!(ModelParams::new(15.0, -1.0, 1.5).is_err());
        assert!(Damkohler::new(-1e-3).is_err());
        assert!(Damkohler::new(f64::NAN).is_err());
    }
}

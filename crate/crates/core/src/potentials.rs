//! Bulk and surface free-energy densities.
//!
//! Both families are globally defined with bounded second derivative:
//! the quartic double well is continued by quadratics outside `[-1, 1]`,
//! and the logarithmic Flory-Huggins mixing energy has its singular tails
//! replaced by quadratic collars of width `zeta`. Middle intervals are
//! closed on both sides when selecting a branch.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Value and first two derivatives of a potential at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PotentialEval {
    pub value: f64,
    pub d1: f64,
    pub d2: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum PotentialSpec {
    /// `F = 0`; reduces the flow to linear diffusion (sanity and accuracy checks).
    Zero,
    TruncatedDoubleWell,
    RegularizedFloryHuggins { theta: f64, zeta: f64 },
}

impl PotentialSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            PotentialSpec::Zero | PotentialSpec::TruncatedDoubleWell => Ok(()),
            PotentialSpec::RegularizedFloryHuggins { theta, zeta } => check_flory(theta, zeta),
        }
    }

    /// Evaluates the potential. Assumes a validated spec and a finite argument.
    #[inline]
    pub fn eval(&self, x: f64) -> PotentialEval {
        match *self {
            PotentialSpec::Zero => PotentialEval {
                value: 0.0,
                d1: 0.0,
                d2: 0.0,
            },
            PotentialSpec::TruncatedDoubleWell => double_well(x),
            PotentialSpec::RegularizedFloryHuggins { theta, zeta } => flory_huggins(x, theta, zeta),
        }
    }

    #[inline]
    pub fn d1(&self, x: f64) -> f64 {
        self.eval(x).d1
    }

    /// Upper bound on `sup |F''|` over the real line.
    pub fn second_derivative_bound(&self) -> f64 {
        second_derivative_bound(self)
    }
}

fn check_flory(theta: f64, zeta: f64) -> Result<()> {
    if !(theta > 1.0 && theta.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "Flory-Huggins theta must exceed 1, got {theta}"
        )));
    }
    if !(zeta > 0.0 && zeta < 0.5) {
        return Err(Error::InvalidParameter(format!(
            "Flory-Huggins zeta must lie in (0, 0.5), got {zeta}"
        )));
    }
    Ok(())
}

fn check_finite(x: f64) -> Result<()> {
    if x.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFinite(format!("potential argument {x}")))
    }
}

pub fn eval_double_well(x: f64) -> Result<PotentialEval> {
    check_finite(x)?;
    Ok(double_well(x))
}

pub fn eval_flory_huggins(x: f64, theta: f64, zeta: f64) -> Result<PotentialEval> {
    check_flory(theta, zeta)?;
    check_finite(x)?;
    Ok(flory_huggins(x, theta, zeta))
}

#[inline]
fn double_well(x: f64) -> PotentialEval {
    if x > 1.0 {
        let d = x - 1.0;
        PotentialEval {
            value: d * d,
            d1: 2.0 * d,
            d2: 2.0,
        }
    } else if x < -1.0 {
        let d = x + 1.0;
        PotentialEval {
            value: d * d,
            d1: 2.0 * d,
            d2: 2.0,
        }
    } else {
        let q = x * x - 1.0;
        PotentialEval {
            value: 0.25 * q * q,
            d1: x * q,
            d2: 3.0 * x * x - 1.0,
        }
    }
}

#[inline]
fn flory_huggins(x: f64, theta: f64, zeta: f64) -> PotentialEval {
    let mix = PotentialEval {
        value: theta * x * (1.0 - x),
        d1: theta * (1.0 - 2.0 * x),
        d2: -2.0 * theta,
    };
    let ln_z = zeta.ln();
    let entropy = if x > 1.0 - zeta {
        let y = 1.0 - x;
        PotentialEval {
            value: x * x.ln() + y * y / (2.0 * zeta) + y * ln_z - 0.5 * zeta,
            d1: x.ln() + 1.0 - y / zeta - ln_z,
            d2: 1.0 / x + 1.0 / zeta,
        }
    } else if x < zeta {
        let y = 1.0 - x;
        PotentialEval {
            value: y * y.ln() + x * x / (2.0 * zeta) + x * ln_z - 0.5 * zeta,
            d1: -y.ln() - 1.0 + x / zeta + ln_z,
            d2: 1.0 / y + 1.0 / zeta,
        }
    } else {
        let y = 1.0 - x;
        PotentialEval {
            value: x * x.ln() + y * y.ln(),
            d1: x.ln() - y.ln(),
            d2: 1.0 / x + 1.0 / y,
        }
    };
    PotentialEval {
        value: entropy.value + mix.value,
        d1: entropy.d1 + mix.d1,
        d2: entropy.d2 + mix.d2,
    }
}

/// Analytic bound on `sup |F''|`.
///
/// For the regularized Flory-Huggins family the second derivative is
/// `1/x + 1/(1-x) - 2 theta` in the middle, `1/zeta + 1/(1-x) - 2 theta` for
/// `x < zeta` and its mirror image above `1 - zeta`. It is largest at the
/// breakpoints, smallest at `x = 1/2`, and tends to `1/zeta - 2 theta` in the
/// far tails, so those three candidates bound its modulus.
pub fn second_derivative_bound(spec: &PotentialSpec) -> f64 {
    match *spec {
        PotentialSpec::Zero => 0.0,
        PotentialSpec::TruncatedDoubleWell => 2.0,
        PotentialSpec::RegularizedFloryHuggins { theta, zeta } => {
            let at_breakpoint = 1.0 / zeta + 1.0 / (1.0 - zeta) - 2.0 * theta;
            let at_center = 4.0 - 2.0 * theta;
            let tails = 1.0 / zeta - 2.0 * theta;
            at_breakpoint.abs().max(at_center.abs()).max(tails.abs())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const FH: PotentialSpec = PotentialSpec::RegularizedFloryHuggins {
        theta: 2.5,
        zeta: 0.005,
    };

    fn central_diff(f: impl Fn(f64) -> f64, x: f64, step: f64) -> f64 {
        (f(x + step) - f(x - step)) / (2.0 * step)
    }

    #[test]
    fn double_well_minimum() {
        let e = eval_double_well(1.0).unwrap();
        assert_eq!((e.value, e.d1, e.d2), (0.0, 0.0, 2.0));
        let e = eval_double_well(-1.0).unwrap();
        assert_eq!((e.value, e.d1), (0.0, 0.0));
    }

    #[test]
    fn double_well_outer_branch() {
        assert_eq!(eval_double_well(2.0).unwrap().value, 1.0);
        assert_eq!(eval_double_well(-3.0).unwrap().value, 4.0);
    }

    #[test]
    fn double_well_d1_at_half() {
        let fd = central_diff(|x| double_well(x).value, 0.5, 1e-6);
        assert!((fd - (-0.375)).abs() < 1e-9);
        assert!((eval_double_well(0.5).unwrap().d1 - (-0.375)).abs() < 1e-15);
    }

    #[test]
    fn double_well_rejects_nan() {
        assert!(eval_double_well(f64::NAN).is_err());
        assert!(eval_double_well(f64::INFINITY).is_err());
    }

    #[test]
    fn flory_center_value() {
        let e = eval_flory_huggins(0.5, 2.5, 0.005).unwrap();
        let want = 0.5f64.ln() + 0.625;
        assert!((e.value - want).abs() < 1e-15);
        assert!((e.value - (-0.068147)).abs() < 1e-6);
        for theta in [1.5, 2.5, 7.0] {
            assert_eq!(eval_flory_huggins(0.5, theta, 0.01).unwrap().d1, 0.0);
        }
    }

    #[test]
    fn flory_rejects_bad_params() {
        assert!(eval_flory_huggins(0.5, 0.9, 0.01).is_err());
        assert!(eval_flory_huggins(0.5, 2.0, 0.0).is_err());
        assert!(eval_flory_huggins(0.5, 2.0, 0.5).is_err());
        assert!(eval_flory_huggins(f64::NAN, 2.0, 0.1).is_err());
    }

    #[test]
    fn flory_branches_join_continuously() {
        for (theta, zeta) in [(2.5, 0.005), (1.2, 0.1), (4.0, 0.3)] {
            let ln_z = f64::ln(zeta);
            // middle-branch formulas evaluated at the breakpoints
            let mid = |x: f64| {
                let y = 1.0 - x;
                (
                    x * x.ln() + y * y.ln() + theta * x * y,
                    x.ln() - y.ln() + theta * (1.0 - 2.0 * x),
                    1.0 / x + 1.0 / y - 2.0 * theta,
                )
            };
            let lower = |x: f64| {
                let y = 1.0 - x;
                (
                    y * y.ln() + x * x / (2.0 * zeta) + x * ln_z - zeta / 2.0 + theta * x * y,
                    -y.ln() - 1.0 + x / zeta + ln_z + theta * (1.0 - 2.0 * x),
                    1.0 / y + 1.0 / zeta - 2.0 * theta,
                )
            };
            let upper = |x: f64| {
                let y = 1.0 - x;
                (
                    x * x.ln() + y * y / (2.0 * zeta) + y * ln_z - zeta / 2.0 + theta * x * y,
                    x.ln() + 1.0 - y / zeta - ln_z + theta * (1.0 - 2.0 * x),
                    1.0 / x + 1.0 / zeta - 2.0 * theta,
                )
            };
            for (a, b) in [(mid(zeta), lower(zeta)), (mid(1.0 - zeta), upper(1.0 - zeta))] {
                assert!((a.0 - b.0).abs() < 1e-12, "{a:?} {b:?}");
                assert!((a.1 - b.1).abs() < 1e-12, "{a:?} {b:?}");
                assert!((a.2 - b.2).abs() < 1e-12 * a.2.abs().max(1.0), "{a:?} {b:?}");
            }
            // and the implementation agrees just either side of each breakpoint
            for x0 in [zeta, 1.0 - zeta] {
                let l = flory_huggins(x0 - 1e-12, theta, zeta);
                let r = flory_huggins(x0 + 1e-12, theta, zeta);
                assert!((l.value - r.value).abs() < 1e-10);
                assert!((l.d1 - r.d1).abs() < 1e-8);
                assert!((l.d2 - r.d2).abs() < 1e-6 * l.d2.abs());
            }
        }
    }

    #[test]
    fn bounds() {
        assert_eq!(second_derivative_bound(&PotentialSpec::TruncatedDoubleWell), 2.0);
        let b = FH.second_derivative_bound();
        assert!((b - (200.0 + 1.0 / 0.995 - 5.0)).abs() < 1e-12);
        assert!((b - 196.005).abs() < 1e-4);

        // numerical maximization of |F''| on a dense scan
        let mut scan_max = 0.0f64;
        let n = 2_000_000;
        for k in 0..=n {
            let x = -3.0 + 7.0 * k as f64 / n as f64;
            scan_max = scan_max.max(FH.eval(x).d2.abs());
        }
        assert!(scan_max <= b + 1e-9);
        assert!(scan_max > b - 0.05);
    }

    #[test]
    fn bound_dominates_random_samples() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for spec in [PotentialSpec::TruncatedDoubleWell, FH] {
            let b = spec.second_derivative_bound();
            for _ in 0..10_000 {
                let x = rng.gen_range(-5.0..6.0);
                assert!(spec.eval(x).d2.abs() <= b);
            }
        }
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let breakpoints = [-1.0, 1.0, 0.005, 0.995];
        for spec in [PotentialSpec::TruncatedDoubleWell, FH] {
            for _ in 0..1000 {
                let x: f64 = rng.gen_range(-3.0..4.0);
                let e = spec.eval(x);
                let fd1 = central_diff(|s| spec.eval(s).value, x, 1e-6);
                assert!(
                    (fd1 - e.d1).abs() <= 1e-5 * e.d1.abs().max(1.0),
                    "{spec:?} d1 at {x}: {fd1} vs {}",
                    e.d1
                );
                if breakpoints.iter().all(|b| (x - b).abs() > 1e-4) {
                    let fd2 = central_diff(|s| spec.eval(s).d1, x, 1e-6);
                    assert!(
                        (fd2 - e.d2).abs() <= 1e-5 * e.d2.abs().max(1.0),
                        "{spec:?} d2 at {x}: {fd2} vs {}",
                        e.d2
                    );
                }
            }
        }
    }

    proptest::proptest! {
        #[test]
        fn double_well_shape(x in -10.0f64..10.0) {
            let e = double_well(x);
            proptest::prop_assert!(e.value >= 0.0);
            proptest::prop_assert!(e.d2 >= -1.0 && e.d2 <= 2.0);
            if e.value == 0.0 {
                proptest::prop_assert!(x.abs() == 1.0);
            }
        }

        #[test]
        fn flory_finite_everywhere(x in -1e3f64..1e3) {
            let e = FH.eval(x);
            proptest::prop_assert!(e.value.is_finite() && e.d1.is_finite() && e.d2.is_finite());
        }
    }
}

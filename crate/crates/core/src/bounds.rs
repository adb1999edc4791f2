//! Closed-form covering-number and generalization bounds.
//!
//! Every bound is evaluated in log space, term by term, so nothing overflows
//! for `n, m <= 1e9`. Logarithms are natural except where a formula uses
//! `log2` explicitly ([`cover_bound_fk`]) or the caller selects
//! [`LogBase::Binary`] for the exponent log of the predictor cover.
//!
//! A log argument that falls to `<= 1` (small `m`, large margin) is clamped
//! to `0` and reported through a `degraded` flag instead of failing: the true
//! covering numbers are at least 1, so the clamped value is still an upper
//! bound.

use std::f64::consts::{E, LN_2};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Base of the logarithm that multiplies the fat-shattering exponent in the
/// predictor-class cover (and the bounds built on it).
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LogBase {
    #[default]
    Natural,
    Binary,
}

impl LogBase {
    fn apply(self, ln_value: f64) -> f64 {
        match self {
            LogBase::Natural => ln_value,
            LogBase::Binary => ln_value / LN_2,
        }
    }
}

/// Constants that are only known to exist. Both default to 1.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundConstants {
    /// Kernel-family cover constant `C`.
    #[serde(rename = "C")]
    pub cover: f64,
    /// Sample-size constant `c`.
    #[serde(rename = "c")]
    pub sample: f64,
    #[serde(default)]
    pub exponent_log: LogBase,
}

impl Default for BoundConstants {
    fn default() -> Self {
        BoundConstants {
            cover: 1.0,
            sample: 1.0,
            exponent_log: LogBase::Natural,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundInputs {
    pub n: u64,
    pub m: u64,
    pub d_phi: f64,
    #[serde(rename = "B")]
    pub b: f64,
    pub gamma: f64,
    pub delta: f64,
    #[serde(default)]
    pub constants: BoundConstants,
}

impl BoundInputs {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.m == 0 {
            return Err(Error::input("n and m must be >= 1"));
        }
        if !(self.d_phi >= 1.0) || !self.d_phi.is_finite() {
            return Err(Error::input("d_phi must be a finite value >= 1"));
        }
        positive(&[("B", self.b), ("gamma", self.gamma)])?;
        // delta = 1 is admitted so the confidence term can be switched off
        if !(self.delta > 0.0 && self.delta <= 1.0) {
            return Err(Error::input("delta must lie in (0, 1]"));
        }
        positive(&[("C", self.constants.cover), ("c", self.constants.sample)])
    }
}

fn positive(values: &[(&str, f64)]) -> Result<()> {
    for (name, v) in values {
        if !(*v > 0.0) || !v.is_finite() {
            return Err(Error::input(format!("{name} must be positive and finite, got {v}")));
        }
    }
    Ok(())
}

/// Clamps a log that went non-positive, recording the event.
fn clamp(ln_value: f64, degraded: &mut bool) -> f64 {
    if ln_value <= 0.0 {
        *degraded = true;
        0.0
    } else {
        ln_value
    }
}

/// Natural log of the predictor-tuple cover bound
/// `N_(n,m)(H^n, eps) <= 2^n (4e n^2 m^3 B / (eps^2 d))^d (16 m B / eps^2)^((64 B n / eps^2) log(e eps m / (8 sqrt B)))`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CoverBoundHn {
    pub log_value: f64,
    /// `n log 2`
    pub tasks_term: f64,
    /// `d log(4e n^2 m^3 B / (eps^2 d))`
    pub kernel_term: f64,
    /// Exponent times `log(16 m B / eps^2)`.
    pub function_term: f64,
    pub degraded: bool,
}

pub fn cover_bound_hn(n: u64, m: u64, b: f64, d_phi: f64, epsilon: f64, base: LogBase) -> Result<CoverBoundHn> {
    if n == 0 || m == 0 {
        return Err(Error::input("n and m must be >= 1"));
    }
    positive(&[("B", b), ("d_phi", d_phi), ("epsilon", epsilon)])?;
    let (nf, mf) = (n as f64, m as f64);
    let mut degraded = false;
    let tasks_term = nf * LN_2;
    let kernel_term = d_phi
        * clamp(
            (4.0 * E).ln() + 2.0 * nf.ln() + 3.0 * mf.ln() + b.ln() - 2.0 * epsilon.ln() - d_phi.ln(),
            &mut degraded,
        );
    let exponent_log = base.apply(clamp(
        1.0 + epsilon.ln() + mf.ln() - 8f64.ln() - 0.5 * b.ln(),
        &mut degraded,
    ));
    let base_log = clamp(16f64.ln() + mf.ln() + b.ln() - 2.0 * epsilon.ln(), &mut degraded);
    let function_term = (64.0 * b * nf / (epsilon * epsilon)) * exponent_log * base_log;
    Ok(CoverBoundHn {
        log_value: tasks_term + kernel_term + function_term,
        tasks_term,
        kernel_term,
        function_term,
        degraded,
    })
}

/// Natural log of `N_(D,n)(K, eps) <= (C n^5 d^5 (sqrt B / eps)^17)^d`, i.e.
/// `d (log C + 5 log n + 5 log d + 17 log(sqrt B / eps))`.
pub fn cover_bound_kernel_dn(n: u64, d_phi: f64, b: f64, epsilon: f64, constants: &BoundConstants) -> Result<f64> {
    if n == 0 {
        return Err(Error::input("n must be >= 1"));
    }
    positive(&[("d_phi", d_phi), ("B", b), ("epsilon", epsilon), ("C", constants.cover)])?;
    Ok(d_phi
        * (constants.cover.ln()
            + 5.0 * (n as f64).ln()
            + 5.0 * d_phi.ln()
            + 17.0 * (0.5 * b.ln() - epsilon.ln())))
}

/// Natural log of the sample-based kernel cover
/// `N_(n,m)(K, eps) <= N_nm(K, eps) <= (e n^2 m^2 B / (eps d))^d`.
pub fn cover_bound_kernel_nm(n: u64, m: u64, b: f64, d_phi: f64, epsilon: f64) -> Result<(f64, bool)> {
    if n == 0 || m == 0 {
        return Err(Error::input("n and m must be >= 1"));
    }
    positive(&[("B", b), ("d_phi", d_phi), ("epsilon", epsilon)])?;
    let mut degraded = false;
    let v = d_phi
        * clamp(
            1.0 + 2.0 * (n as f64).ln() + 2.0 * (m as f64).ln() + b.ln() - epsilon.ln() - d_phi.ln(),
            &mut degraded,
        );
    Ok((v, degraded))
}

/// Natural log of the single-class cover
/// `N_m(F_K, eps) <= 2 (4 m B / eps^2)^((16 B / eps^2) log2(eps e m / (4 sqrt B)))`.
pub fn cover_bound_fk(m: u64, b: f64, epsilon: f64) -> Result<(f64, bool)> {
    if m == 0 {
        return Err(Error::input("m must be >= 1"));
    }
    positive(&[("B", b), ("epsilon", epsilon)])?;
    let mut degraded = false;
    let mf = m as f64;
    let exponent_log = clamp(1.0 + epsilon.ln() + mf.ln() - 4f64.ln() - 0.5 * b.ln(), &mut degraded) / LN_2;
    let base_log = clamp(4f64.ln() + mf.ln() + b.ln() - 2.0 * epsilon.ln(), &mut degraded);
    Ok((LN_2 + 16.0 * b / (epsilon * epsilon) * exponent_log * base_log, degraded))
}

/// Sample size `c d^2 B^(5/2) / eps^5` at which empirical kernel distances
/// certify distribution-level ones.
pub fn appendix_sample_size(d_phi: f64, b: f64, epsilon: f64, constants: &BoundConstants) -> Result<f64> {
    positive(&[("d_phi", d_phi), ("B", b), ("epsilon", epsilon), ("c", constants.sample)])?;
    Ok(constants.sample * d_phi * d_phi * b.powf(2.5) / epsilon.powi(5))
}

/// The four summands inside the square root of the multi-task bound (before
/// the factor `8/m`).
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MultitaskTerms {
    /// `(2 log 2 - log delta) / n`
    pub confidence: f64,
    /// `log 2`
    pub constant: f64,
    /// `(d/n) log(128 e n^2 m^3 B / (gamma^2 d))`, the kernel-selection overhead.
    pub complexity: f64,
    /// `(256 B / gamma^2) log(gamma e m / (8 sqrt B)) log(128 m B / gamma^2)`
    pub margin: f64,
}

impl MultitaskTerms {
    pub fn sum(&self) -> f64 {
        self.confidence + self.constant + self.complexity + self.margin
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MultitaskBound {
    pub epsilon: f64,
    /// `m > 2 / eps^2`, the precondition under which the bound holds.
    pub valid: bool,
    /// Some log argument was `<= 1` and clamped.
    pub degraded: bool,
    pub terms: MultitaskTerms,
}

/// Uniform deviation `eps` such that, with probability `>= 1 - delta`, every
/// predictor tuple satisfies `er^{2 gamma} + eps >= er_hat^gamma >= er - eps`.
pub fn multitask_epsilon(inputs: &BoundInputs) -> Result<MultitaskBound> {
    inputs.validate()?;
    let BoundInputs {
        n,
        m,
        d_phi,
        b,
        gamma,
        delta,
        constants,
    } = *inputs;
    let (nf, mf) = (n as f64, m as f64);
    let mut degraded = false;
    let confidence = (2.0 * LN_2 - delta.ln()) / nf;
    let complexity = d_phi / nf
        * clamp(
            128f64.ln() + 1.0 + 2.0 * nf.ln() + 3.0 * mf.ln() + b.ln() - 2.0 * gamma.ln() - d_phi.ln(),
            &mut degraded,
        );
    let exponent_log = constants.exponent_log.apply(clamp(
        gamma.ln() + 1.0 + mf.ln() - 8f64.ln() - 0.5 * b.ln(),
        &mut degraded,
    ));
    let base_log = clamp(128f64.ln() + mf.ln() + b.ln() - 2.0 * gamma.ln(), &mut degraded);
    let margin = 256.0 * b / (gamma * gamma) * exponent_log * base_log;
    let terms = MultitaskTerms {
        confidence,
        constant: LN_2,
        complexity,
        margin,
    };
    let epsilon = (8.0 * terms.sum() / mf).sqrt();
    if degraded {
        log::warn!("multi-task bound evaluated in the degraded regime (clamped log argument)");
    }
    Ok(MultitaskBound {
        epsilon,
        valid: mf > 2.0 / (epsilon * epsilon),
        degraded,
        terms,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LifelongBound {
    /// `delta`, clamped to `[0, 1]`.
    pub delta: f64,
    /// Natural log of the sample-level summand.
    pub log_first: f64,
    /// Natural log of the task-level summand.
    pub log_second: f64,
    /// `log(exp(log_first) + exp(log_second))`, unclamped.
    pub log_total: f64,
    /// `n > 8/eps^2` and `m > 8/eps^2`.
    pub valid: bool,
    /// Some summand exceeds 1 on its own.
    pub overflow: bool,
    pub degraded: bool,
}

fn log_add_exp(a: f64, b: f64) -> f64 {
    let hi = a.max(b);
    if hi == f64::NEG_INFINITY {
        return hi;
    }
    hi + ((a - hi).exp() + (b - hi).exp()).ln()
}

/// Failure probability of the lifelong bound at deviation `epsilon`:
///
/// `2^(n+2) (512 e n^2 m^3 B / (gamma^2 d))^d (512 m B / gamma^2)^((1024 B n / gamma^2) log(e gamma m / (16 sqrt B))) exp(-n m eps^2 / 32)`
/// `+ 4 (32 C n^5 d^5 (64 sqrt B / (eps gamma))^17)^d exp(-n eps^2 / 128)`.
///
/// The task-level cover is taken over `2n` distributions, which is where the
/// factor 32 in the second summand comes from.
pub fn lifelong_delta(inputs: &BoundInputs, epsilon: f64) -> Result<LifelongBound> {
    inputs.validate()?;
    positive(&[("epsilon", epsilon)])?;
    let BoundInputs {
        n,
        m,
        d_phi,
        b,
        gamma,
        constants,
        ..
    } = *inputs;
    let (nf, mf) = (n as f64, m as f64);
    let mut degraded = false;

    let kernel_term = d_phi
        * clamp(
            512f64.ln() + 1.0 + 2.0 * nf.ln() + 3.0 * mf.ln() + b.ln() - 2.0 * gamma.ln() - d_phi.ln(),
            &mut degraded,
        );
    let exponent_log = constants.exponent_log.apply(clamp(
        1.0 + gamma.ln() + mf.ln() - 16f64.ln() - 0.5 * b.ln(),
        &mut degraded,
    ));
    let base_log = clamp(512f64.ln() + mf.ln() + b.ln() - 2.0 * gamma.ln(), &mut degraded);
    let function_term = 1024.0 * b * nf / (gamma * gamma) * exponent_log * base_log;
    let log_first = (nf + 2.0) * LN_2 + kernel_term + function_term - nf * mf * epsilon * epsilon / 32.0;

    let family_term = d_phi
        * clamp(
            32f64.ln()
                + constants.cover.ln()
                + 5.0 * nf.ln()
                + 5.0 * d_phi.ln()
                + 17.0 * (64f64.ln() + 0.5 * b.ln() - epsilon.ln() - gamma.ln()),
            &mut degraded,
        );
    let log_second = 4f64.ln() + family_term - nf * epsilon * epsilon / 128.0;

    let log_total = log_add_exp(log_first, log_second);
    let overflow = log_first > 0.0 || log_second > 0.0;
    let delta = if log_total >= 0.0 { 1.0 } else { log_total.exp() };
    Ok(LifelongBound {
        delta,
        log_first,
        log_second,
        log_total,
        valid: nf > 8.0 / (epsilon * epsilon) && mf > 8.0 / (epsilon * epsilon),
        overflow,
        degraded,
    })
}

/// Bracket searched by [`invert_epsilon`].
pub const INVERT_BRACKET: (f64, f64) = (1e-6, 2.0);

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct InvertedEpsilon {
    pub epsilon: f64,
    pub bound: LifelongBound,
    pub iterations: usize,
    /// `|delta(eps) - target| <= 1e-9`.
    pub within_tolerance: bool,
}

/// Solves `lifelong_delta(eps) = inputs.delta` for `eps` by bisection on
/// [`INVERT_BRACKET`], to `|delta(eps) - target| <= 1e-9`.
pub fn invert_epsilon(inputs: &BoundInputs) -> Result<InvertedEpsilon> {
    inputs.validate()?;
    let target = inputs.delta;
    let ln_target = target.ln();
    let (mut lo, mut hi) = INVERT_BRACKET;
    let f = |eps: f64| -> Result<f64> { Ok(lifelong_delta(inputs, eps)?.log_total - ln_target) };

    let (f_lo, f_hi) = (f(lo)?, f(hi)?);
    if !(f_lo > 0.0 && f_hi < 0.0) {
        return Err(Error::Infeasible(format!(
            "lifelong delta does not cross {target} on [{lo}, {hi}] (log-gap {f_lo:.3e} .. {f_hi:.3e})"
        )));
    }
    // delta(eps) must be non-increasing on the bracket for bisection to be meaningful
    let grid = 64;
    let mut prev = f_lo;
    for i in 1..=grid {
        let eps = lo + (hi - lo) * i as f64 / grid as f64;
        let cur = f(eps)?;
        if cur > prev + 1e-9 * prev.abs().max(1.0) {
            return Err(Error::numeric(format!(
                "lifelong delta is not monotone near eps = {eps}"
            )));
        }
        prev = cur;
    }

    // bisect down to floating-point resolution of eps; a loose stop on
    // |delta - target| alone would accept any eps once delta is tiny
    let mut iterations = 0;
    while hi - lo > 4.0 * f64::EPSILON * hi && iterations < 200 {
        iterations += 1;
        let mid = 0.5 * (lo + hi);
        let gap = f(mid)?;
        if gap == 0.0 {
            lo = mid;
            hi = mid;
        } else if gap > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let (b_lo, b_hi) = (lifelong_delta(inputs, lo)?, lifelong_delta(inputs, hi)?);
    let (epsilon, bound) = if (b_lo.log_total - ln_target).abs() <= (b_hi.log_total - ln_target).abs() {
        (lo, b_lo)
    } else {
        (hi, b_hi)
    };
    let within_tolerance = (bound.delta - target).abs() <= 1e-9;
    if !within_tolerance {
        log::warn!("inverted epsilon misses the target delta by {:e}", (bound.delta - target).abs());
    }
    Ok(InvertedEpsilon {
        epsilon,
        bound,
        iterations,
        within_tolerance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reference() -> BoundInputs {
        BoundInputs {
            n: 4,
            m: 64,
            d_phi: 3.0,
            b: 1.0,
            gamma: 0.5,
            delta: 0.05,
            constants: BoundConstants::default(),
        }
    }

    #[test]
    fn cover_hn_at_one_task() {
        let c = cover_bound_hn(1, 64, 1.0, 3.0, 0.25, LogBase::Natural).unwrap();
        assert!((c.tasks_term - LN_2).abs() < 1e-15);
        let direct = 3.0 * (4.0 * E * 64f64.powi(3) / (0.0625 * 3.0)).ln();
        assert!((c.kernel_term - direct).abs() < 1e-12 * direct);
    }

    #[test]
    fn doubling_tasks_in_cover_hn() {
        for n in [1u64, 3, 10] {
            let a = cover_bound_hn(n, 64, 1.0, 3.0, 0.25, LogBase::Natural).unwrap();
            let b = cover_bound_hn(2 * n, 64, 1.0, 3.0, 0.25, LogBase::Natural).unwrap();
            let first_two = (b.tasks_term + b.kernel_term) - (a.tasks_term + a.kernel_term);
            assert!((first_two - (n as f64 * LN_2 + 3.0 * 4f64.ln())).abs() < 1e-10);
            assert!((b.function_term / a.function_term - 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn binary_exponent_log_switch() {
        let nat = cover_bound_hn(4, 64, 1.0, 3.0, 0.25, LogBase::Natural).unwrap();
        let bin = cover_bound_hn(4, 64, 1.0, 3.0, 0.25, LogBase::Binary).unwrap();
        assert!((bin.function_term / nat.function_term - 1.0 / LN_2).abs() < 1e-12);
    }

    #[test]
    fn kernel_dn_identities() {
        let c = BoundConstants::default();
        let at_scale = cover_bound_kernel_dn(7, 2.0, 4.0, 2.0, &c).unwrap();
        let expected = 2.0 * (5.0 * 7f64.ln() + 5.0 * 2f64.ln());
        assert!((at_scale - expected).abs() < 1e-12);
        let a = cover_bound_kernel_dn(5, 3.0, 1.0, 0.1, &c).unwrap();
        let b = cover_bound_kernel_dn(10, 3.0, 1.0, 0.1, &c).unwrap();
        assert!((b - a - 15.0 * LN_2).abs() < 1e-12);
        let unit = cover_bound_kernel_dn(1, 1.0, 1.0, 0.5, &c).unwrap();
        assert!((unit - 17.0 * LN_2).abs() < 1e-13);
    }

    #[test]
    fn sample_size_scaling() {
        let c = BoundConstants::default();
        assert_eq!(appendix_sample_size(1.0, 1.0, 1.0, &c).unwrap(), 1.0);
        let a = appendix_sample_size(3.0, 2.0, 0.4, &c).unwrap();
        assert!((appendix_sample_size(3.0, 2.0, 0.2, &c).unwrap() / a - 32.0).abs() < 1e-12);
        assert!((appendix_sample_size(6.0, 2.0, 0.4, &c).unwrap() / a - 4.0).abs() < 1e-12);
        assert!(appendix_sample_size(0.0, 1.0, 1.0, &c).is_err());
    }

    #[test]
    fn epsilon_decreases_in_m() {
        let mut prev = f64::INFINITY;
        let mut m = 32;
        while m <= 4096 {
            let e = multitask_epsilon(&BoundInputs { m, ..reference() }).unwrap();
            assert!(e.epsilon < prev, "m = {m}");
            prev = e.epsilon;
            m *= 2;
        }
    }

    #[test]
    fn complexity_term_vanishes_with_tasks() {
        let big = multitask_epsilon(&BoundInputs { n: 1_000_000, ..reference() }).unwrap();
        assert!(big.terms.complexity < 1e-3);
        let one = multitask_epsilon(&reference()).unwrap();
        assert!(one.terms.complexity > big.terms.complexity);
    }

    #[test]
    fn delta_one_removes_log_delta() {
        let e = multitask_epsilon(&BoundInputs { delta: 1.0, n: 5, ..reference() }).unwrap();
        assert!((e.terms.confidence - 2.0 * LN_2 / 5.0).abs() < 1e-15);
    }

    #[test]
    fn validity_and_degraded_flags() {
        let e = multitask_epsilon(&reference()).unwrap();
        assert_eq!(e.valid, 64.0 > 2.0 / (e.epsilon * e.epsilon));
        let tiny = multitask_epsilon(&BoundInputs { m: 2, ..reference() }).unwrap();
        assert!(tiny.degraded);
        assert!(multitask_epsilon(&BoundInputs { gamma: 0.0, ..reference() }).is_err());
        assert!(multitask_epsilon(&BoundInputs { delta: 0.0, ..reference() }).is_err());
    }

    #[test]
    fn second_lifelong_summand_vanishes() {
        let inputs = BoundInputs {
            n: 100_000,
            gamma: 1.0,
            ..reference()
        };
        let l = lifelong_delta(&inputs, 1.5).unwrap();
        assert!(l.log_second < -1000.0, "{}", l.log_second);
    }

    #[test]
    fn second_summand_substitution_identity() {
        let inputs = BoundInputs {
            n: 50,
            d_phi: 1.0,
            b: 2.0,
            gamma: 0.3,
            ..reference()
        };
        let eps = 0.7;
        let l = lifelong_delta(&inputs, eps).unwrap();
        let n = 50f64;
        let direct = (4.0 * 32.0 * n.powi(5) * (64.0 * 2f64.sqrt() / (eps * 0.3)).powi(17)).ln()
            - n * eps * eps / 128.0;
        assert!((l.log_second - direct).abs() < 1e-12 * direct.abs());
    }

    #[test]
    fn lifelong_summands_decrease_in_epsilon() {
        let inputs = reference();
        let mut prev: Option<LifelongBound> = None;
        for i in 1..=40 {
            let l = lifelong_delta(&inputs, 0.05 * i as f64).unwrap();
            if let Some(p) = prev {
                assert!(l.log_first < p.log_first);
                assert!(l.log_second < p.log_second);
            }
            prev = Some(l);
        }
    }

    fn large_scale() -> BoundInputs {
        BoundInputs {
            n: 200_000,
            m: 1_000_000_000,
            d_phi: 1.0,
            b: 1.0,
            gamma: 1.0,
            delta: 0.05,
            constants: BoundConstants::default(),
        }
    }

    #[test]
    fn invert_round_trip() {
        let inputs = large_scale();
        let eps0 = 0.35;
        let target = lifelong_delta(&inputs, eps0).unwrap();
        assert!(target.delta > 1e-300 && target.delta < 1.0, "{target:?}");
        let inv = invert_epsilon(&BoundInputs { delta: target.delta, ..inputs }).unwrap();
        assert!((inv.epsilon - eps0).abs() < 1e-6, "{inv:?}");
        assert!(inv.within_tolerance);
        assert!((inv.bound.delta - target.delta).abs() <= 1e-9);
    }

    #[test]
    fn smaller_target_gives_larger_epsilon() {
        let inputs = large_scale();
        let a = invert_epsilon(&BoundInputs { delta: 0.1, ..inputs }).unwrap();
        let b = invert_epsilon(&BoundInputs { delta: 0.001, ..inputs }).unwrap();
        assert!(b.epsilon > a.epsilon);
        assert!(a.within_tolerance && b.within_tolerance);
        assert!((a.bound.delta - 0.1).abs() <= 1e-9);
    }

    #[test]
    fn invert_infeasible_at_tiny_n() {
        let r = invert_epsilon(&BoundInputs { n: 2, ..reference() });
        assert!(matches!(r, Err(Error::Infeasible(_))));
    }

    #[test]
    fn no_overflow_at_large_scale() {
        let inputs = BoundInputs {
            n: 1_000_000_000,
            m: 1_000_000_000,
            ..reference()
        };
        let e = multitask_epsilon(&inputs).unwrap();
        assert!(e.epsilon.is_finite());
        let l = lifelong_delta(&inputs, 0.01).unwrap();
        assert!(l.log_first.is_finite() && l.log_second.is_finite());
        let c = cover_bound_hn(1_000_000_000, 1_000_000_000, 1.0, 3.0, 1e-3, LogBase::Natural).unwrap();
        assert!(c.log_value.is_finite());
    }

    #[test]
    fn kernel_cover_chain_formula() {
        let (v, degraded) = cover_bound_kernel_nm(3, 10, 2.0, 2.0, 0.5).unwrap();
        assert!(!degraded);
        let direct = 2.0 * (E * 9.0 * 100.0 * 2.0 / (0.5 * 2.0)).ln();
        assert!((v - direct).abs() < 1e-12 * direct);
    }
}

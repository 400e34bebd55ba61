use crate::conformal::ConformalRule;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::simplex::{check_temperature, temper_log, LabelSet, ProbVector};

/// Search settings for per-instance conformal temperature scaling.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TsOptions<F> {
    /// Allowed overshoot of the in-set mass above `1 - alpha`.
    pub tol: F,
    /// Initial temperature bracket; each end is widened once by `expand`.
    pub bounds: (F, F),
    pub expand: F,
    pub max_iter: usize,
}

impl<F: Scalar> Default for TsOptions<F> {
    fn default() -> Self {
        Self {
            tol: F::lit(1e-6),
            bounds: (F::lit(1e-3), F::lit(1e3)),
            expand: F::lit(10.0),
            max_iter: 200,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TsStatus {
    /// In-set mass in `[1 - alpha, 1 - alpha + tol]`.
    Feasible,
    /// The set holds every class with mass (or none): temperature has no effect.
    ConstantMass,
    /// `1 - alpha` is out of reach; the bound with the larger in-set mass is used.
    Infeasible,
    /// The constraint holds but the overshoot could not be brought under `tol`.
    Overshoot,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TemperedPrediction<F> {
    pub probs: ProbVector<F>,
    pub tau: F,
    pub status: TsStatus,
    pub set: LabelSet,
    pub empty_fallback: bool,
}

/// In-set mass of `tempered_softmax(p, tau)`.
pub fn in_set_mass_at<F: Scalar>(p: &ProbVector<F>, set: &LabelSet, tau: F) -> Result<F> {
    check_temperature(tau)?;
    Ok(temper_log(&p.clamped_log(), tau).mass_of(set))
}

/// Finds, per instance, the temperature whose in-set mass meets `1 - alpha`
/// from above with overshoot at most `opts.tol`.
///
/// In-set mass is nonincreasing in `tau` for prefix sets of the descending
/// order, which every APS/MSP set is, so a bisection on `log tau` applies.
pub fn conformal_ts_apply<F: Scalar>(
    rule: &ConformalRule<F>,
    p: &ProbVector<F>,
    opts: &TsOptions<F>,
) -> Result<TemperedPrediction<F>> {
    let (lo0, hi0) = opts.bounds;
    check_temperature(lo0)?;
    check_temperature(hi0)?;
    if !(lo0 < hi0) || !(opts.tol > F::zero()) || !(opts.expand >= F::one()) {
        return Err(Error::InvalidParameter(
            "conformal TS needs tol > 0, expand >= 1 and 0 < lo < hi".into(),
        ));
    }
    let pred = rule.predict(p);
    let set = pred.set;
    let done = |probs, tau, status| TemperedPrediction {
        probs,
        tau,
        status,
        set: set.clone(),
        empty_fallback: pred.empty_fallback,
    };

    let target = F::one() - rule.alpha;
    let outside: F = (0..p.k()).filter(|&c| !set.contains(c)).map(|c| p.get(c)).sum();
    if set.is_full() || outside <= F::zero() {
        return Ok(done(p.clone(), F::one(), TsStatus::ConstantMass));
    }
    let m1 = p.mass_of(&set);
    if m1 >= target && m1 - target <= opts.tol {
        return Ok(done(p.clone(), F::one(), TsStatus::Feasible));
    }

    let log_p = p.clamped_log();
    let eval = |tau: F| {
        let q = temper_log(&log_p, tau);
        let m = q.mass_of(&set);
        (q, m)
    };
    let within = |m: F| m >= target && m - target <= opts.tol;

    let mut lo = lo0;
    let mut at_lo = eval(lo);
    if at_lo.1 < target {
        lo = lo / opts.expand;
        at_lo = eval(lo);
    }
    let mut hi = hi0;
    let mut at_hi = eval(hi);
    if at_hi.1 >= target {
        hi = hi * opts.expand;
        at_hi = eval(hi);
    }

    if at_lo.1 < target {
        // the constraint cannot be met anywhere in the bracket
        let (probs, tau) = if at_hi.1 > at_lo.1 { (at_hi.0, hi) } else { (at_lo.0, lo) };
        return Ok(done(probs, tau, TsStatus::Infeasible));
    }
    if within(at_lo.1) {
        return Ok(done(at_lo.0, lo, TsStatus::Feasible));
    }
    if at_hi.1 >= target {
        let status = if within(at_hi.1) { TsStatus::Feasible } else { TsStatus::Overshoot };
        return Ok(done(at_hi.0, hi, status));
    }

    // invariant: mass(lo) > target + tol, mass(hi) < target
    for _ in 0..opts.max_iter {
        let mid = (lo * hi).sqrt();
        if !(mid > lo && mid < hi) {
            break;
        }
        let at_mid = eval(mid);
        if at_mid.1 >= target {
            if within(at_mid.1) {
                return Ok(done(at_mid.0, mid, TsStatus::Feasible));
            }
            lo = mid;
            at_lo = at_mid;
        } else {
            hi = mid;
        }
    }
    Ok(done(at_lo.0, lo, TsStatus::Overshoot))
}

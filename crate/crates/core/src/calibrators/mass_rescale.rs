use crate::conformal::ConformalRule;
use crate::scalar::Scalar;
use crate::simplex::{LabelSet, ProbVector};

/// Output of [`mass_rescale_apply`].
#[derive(Debug, Clone, PartialEq)]
pub struct MassRescaled<F> {
    pub probs: ProbVector<F>,
    pub set: LabelSet,
    pub empty_fallback: bool,
    /// The set or its complement carried no mass; `probs` is the input.
    pub degenerate: bool,
}

/// Scales the mass inside `set` to `1 - alpha` and the mass outside to
/// `alpha`, keeping proportions within each group.
///
/// This is the KL projection of `p` onto `{q : sum_{y in set} q_y = 1 - alpha}`.
/// Returns the input unchanged and `true` when either side has zero mass.
pub fn rescale_to_set<F: Scalar>(p: &ProbVector<F>, set: &LabelSet, alpha: F) -> (ProbVector<F>, bool) {
    let mask = set.mask();
    let (mut inside, mut outside) = (F::zero(), F::zero());
    for (&v, &m) in p.as_slice().iter().zip(&mask) {
        if m {
            inside = inside + v;
        } else {
            outside = outside + v;
        }
    }
    if inside <= F::zero() || outside <= F::zero() {
        return (p.clone(), true);
    }
    let scale_in = (F::one() - alpha) / inside;
    let scale_out = alpha / outside;
    let out = p
        .as_slice()
        .iter()
        .zip(&mask)
        .map(|(&v, &m)| if m { v * scale_in } else { v * scale_out })
        .collect();
    (ProbVector::from_raw(out), false)
}

pub fn mass_rescale_apply<F: Scalar>(rule: &ConformalRule<F>, p: &ProbVector<F>) -> MassRescaled<F> {
    let pred = rule.predict(p);
    let (probs, degenerate) = rescale_to_set(p, &pred.set, rule.alpha);
    MassRescaled {
        probs,
        set: pred.set,
        empty_fallback: pred.empty_fallback,
        degenerate,
    }
}

use crate::adversary::DiscriminatorOutput;
use crate::error::{Error, Result};
use crate::numerics::{Float, Var};

fn mean_over<'t, T: Float>(terms: Vec<Var<'t, T>>) -> Result<Var<'t, T>> {
    let n = terms.len();
    let mut it = terms.into_iter();
    let first = it
        .next()
        .ok_or_else(|| Error::InvalidArgument("no discriminator outputs".into()))?;
    let total = it.try_fold(first, |acc, t| acc.add(t))?;
    Ok(total.scale(T::lit(1.0 / n as f64)))
}

/// `relu(1 - s)` averaged per map.
fn margin_below<'t, T: Float>(s: Var<'t, T>) -> Var<'t, T> {
    s.neg().add_scalar(T::one()).relu().mean()
}

/// Mean over sub-discriminators of `mean(max(0, 1 - real)) + mean(max(0, 1 + fake))`.
pub fn hinge_d_loss<'t, T: Float>(real: &[Var<'t, T>], fake: &[Var<'t, T>]) -> Result<Var<'t, T>> {
    if real.len() != fake.len() {
        return Err(Error::dim(format!(
            "hinge loss over {} real and {} fake score maps",
            real.len(),
            fake.len()
        )));
    }
    let terms = real
        .iter()
        .zip(fake)
        .map(|(&r, &f)| margin_below(r).add(f.add_scalar(T::one()).relu().mean()))
        .collect::<Result<Vec<_>>>()?;
    mean_over(terms)
}

/// Mean over sub-discriminators of `mean(max(0, 1 - fake))`.
pub fn hinge_g_loss<'t, T: Float>(fake: &[Var<'t, T>]) -> Result<Var<'t, T>> {
    mean_over(fake.iter().map(|&f| margin_below(f)).collect())
}

/// Mean absolute difference of corresponding feature maps, averaged over maps.
pub fn feature_matching_loss<'t, T: Float>(
    real: &[DiscriminatorOutput<'t, T>],
    fake: &[DiscriminatorOutput<'t, T>],
) -> Result<Var<'t, T>> {
    if real.len() != fake.len() {
        return Err(Error::dim(format!(
            "feature matching over {} and {} sub-discriminators",
            real.len(),
            fake.len()
        )));
    }
    let mut terms = Vec::new();
    for (r, f) in real.iter().zip(fake) {
        if r.features.len() != f.features.len() {
            return Err(Error::dim(format!(
                "feature matching over {} and {} maps",
                r.features.len(),
                f.features.len()
            )));
        }
        for (&a, &b) in r.features.iter().zip(&f.features) {
            terms.push(a.sub(b)?.abs().mean());
        }
    }
    mean_over(terms)
}

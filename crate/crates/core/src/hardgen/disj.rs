//! Two-party set disjointness under `tau_beta` and its k-fold composition.

use rand::seq::index::sample;
use rand::Rng;

use super::rng_for;
use crate::error::{Error, Result};

const TAG_DISJ: u64 = 0xD151;
const TAG_BITDISJ: u64 = 0xB17D;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DisjLabel {
    Disjoint,
    Intersecting,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DisjInstance {
    pub nprime: usize,
    pub beta: f64,
    pub seed: u64,
    /// Sorted.
    pub x: Vec<usize>,
    /// Sorted.
    pub y: Vec<usize>,
    pub witness: Option<usize>,
}

impl DisjInstance {
    pub fn label(&self) -> DisjLabel {
        if self.witness.is_some() {
            DisjLabel::Intersecting
        } else {
            DisjLabel::Disjoint
        }
    }

    pub fn set_size(&self) -> usize {
        (self.nprime + 1) / 4
    }

    pub fn validate(&self) -> Result<()> {
        let l = check_nprime(self.nprime)?;
        check_set(&self.x, l, self.nprime, "x")?;
        check_set(&self.y, l, self.nprime, "y")?;
        let common = intersection(&self.x, &self.y);
        if common.len() > 1 {
            return Err(Error::Structure(format!(
                "|x ∩ y| = {} exceeds 1",
                common.len()
            )));
        }
        if common.first().copied() != self.witness {
            return Err(Error::Structure(format!(
                "witness {:?} disagrees with intersection {common:?}",
                self.witness
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BitDisjInstance {
    pub k: usize,
    pub nprime: usize,
    pub beta: f64,
    pub seed: u64,
    /// Site inputs, each sorted.
    pub x: Vec<Vec<usize>>,
    /// The coordinator's reference set, sorted.
    pub y: Vec<usize>,
    /// `z[i]` is 1 iff `x[i]` meets `y`.
    pub z: Vec<bool>,
}

impl BitDisjInstance {
    pub fn ones(&self) -> usize {
        self.z.iter().filter(|&&b| b).count()
    }

    pub fn set_size(&self) -> usize {
        (self.nprime + 1) / 4
    }

    pub fn validate(&self) -> Result<()> {
        let l = check_nprime(self.nprime)?;
        if self.x.len() != self.k || self.z.len() != self.k {
            return Err(Error::Structure(format!(
                "expected {} site sets and bits, got {} and {}",
                self.k,
                self.x.len(),
                self.z.len()
            )));
        }
        check_set(&self.y, l, self.nprime, "y")?;
        for (i, xi) in self.x.iter().enumerate() {
            check_set(xi, l, self.nprime, "x_i")?;
            let common = intersection(xi, &self.y).len();
            if common > 1 {
                return Err(Error::Structure(format!("site {i}: |x ∩ y| = {common}")));
            }
            if (common == 1) != self.z[i] {
                return Err(Error::Structure(format!(
                    "site {i}: recorded bit disagrees with sets"
                )));
            }
        }
        Ok(())
    }
}

fn check_nprime(nprime: usize) -> Result<usize> {
    if nprime < 3 || nprime % 4 != 3 {
        return Err(Error::param(
            "nprime",
            format!("universe size must be 3 mod 4 so that (n'+1)/4 is an integer, got {nprime}"),
        ));
    }
    Ok((nprime + 1) / 4)
}

fn check_beta(beta: f64, max: f64) -> Result<()> {
    if !(0.0..=max).contains(&beta) {
        return Err(Error::param(
            "beta",
            format!("must lie in [0, {max}], got {beta}"),
        ));
    }
    Ok(())
}

fn check_set(s: &[usize], size: usize, n: usize, name: &str) -> Result<()> {
    if s.len() != size {
        return Err(Error::Structure(format!(
            "|{name}| = {} but expected {size}",
            s.len()
        )));
    }
    if s.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Structure(format!(
            "{name} is not strictly increasing"
        )));
    }
    if s.last().is_some_and(|&e| e >= n) {
        return Err(Error::Structure(format!(
            "{name} leaves the universe [0, {n})"
        )));
    }
    Ok(())
}

fn intersection(a: &[usize], b: &[usize]) -> Vec<usize> {
    let (mut i, mut j) = (0, 0);
    let mut out = Vec::new();
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                out.push(a[i]);
                i += 1;
                j += 1;
            }
        }
    }
    out
}

fn complement(y: &[usize], n: usize) -> Vec<usize> {
    let mut out = Vec::with_capacity(n - y.len());
    let mut it = y.iter().peekable();
    for e in 0..n {
        if it.peek() == Some(&&e) {
            it.next();
        } else {
            out.push(e);
        }
    }
    out
}

fn random_subset<R: Rng + ?Sized>(rng: &mut R, n: usize, size: usize) -> Vec<usize> {
    let mut s = sample(rng, n, size).into_vec();
    s.sort_unstable();
    s
}

/// Draws `x ~ tau_beta | y`: with probability `beta` one uniform element of
/// `y` plus `l - 1` uniform elements outside `y`, otherwise `l` uniform
/// elements outside `y`. `outside` is the sorted complement of `y`.
/// Returns the sorted set and the common element, if any.
pub fn conditional_on_y<R: Rng + ?Sized>(
    rng: &mut R,
    y: &[usize],
    outside: &[usize],
    beta: f64,
) -> (Vec<usize>, Option<usize>) {
    let l = y.len();
    let hit = rng.random::<f64>() < beta;
    let from_outside = if hit { l - 1 } else { l };
    let mut x = Vec::with_capacity(l);
    let witness = hit.then(|| y[rng.random_range(0..l)]);
    // selection sampling keeps the output sorted
    let mut need = from_outside;
    let mut pending = witness;
    for (i, &e) in outside.iter().enumerate() {
        if need == 0 {
            break;
        }
        if rng.random_range(0..outside.len() - i) < need {
            if let Some(w) = pending.filter(|&w| w < e) {
                x.push(w);
                pending = None;
            }
            x.push(e);
            need -= 1;
        }
    }
    x.extend(pending);
    (x, witness)
}

/// `tau_beta` for any `beta` in `[0, 1]`; [`gen_two_disj`] restricts to the
/// range the lower-bound argument uses.
pub fn sample_two_disj(nprime: usize, beta: f64, seed: u64) -> Result<DisjInstance> {
    let l = check_nprime(nprime)?;
    check_beta(beta, 1.0)?;
    let mut rng = rng_for(seed, TAG_DISJ);
    let y = random_subset(&mut rng, nprime, l);
    let outside = complement(&y, nprime);
    let (x, witness) = conditional_on_y(&mut rng, &y, &outside, beta);
    Ok(DisjInstance {
        nprime,
        beta,
        seed,
        x,
        y,
        witness,
    })
}

/// An instance of 2-DISJ drawn from `tau_beta` with `0 <= beta <= 1/4`.
pub fn gen_two_disj(nprime: usize, beta: f64, seed: u64) -> Result<DisjInstance> {
    check_beta(beta, 0.25)?;
    sample_two_disj(nprime, beta, seed)
}

/// The composed distribution is meant for `beta k` bounded below by a
/// constant; outside `beta k >= 8` generation still proceeds but callers
/// should surface this note.
pub fn bit_disj_regime_warning(k: usize, beta: f64) -> Option<String> {
    let bk = beta * k as f64;
    (bk < 8.0).then(|| format!("beta * k = {bk} is below 8; expected sum of Z is tiny"))
}

/// `k` site sets drawn independently from `tau_beta | Y` for one shared `Y`,
/// so every pair `(X_i, Y)` is marginally `tau_beta`.
pub fn gen_bit_disj(k: usize, nprime: usize, beta: f64, seed: u64) -> Result<BitDisjInstance> {
    if k == 0 {
        return Err(Error::param("k", "need at least one site"));
    }
    let l = check_nprime(nprime)?;
    check_beta(beta, 0.25)?;
    let mut rng = rng_for(seed, TAG_BITDISJ);
    let y = random_subset(&mut rng, nprime, l);
    let outside = complement(&y, nprime);
    let mut x = Vec::with_capacity(k);
    let mut z = Vec::with_capacity(k);
    for _ in 0..k {
        let (xi, w) = conditional_on_y(&mut rng, &y, &outside, beta);
        x.push(xi);
        z.push(w.is_some());
    }
    Ok(BitDisjInstance {
        k,
        nprime,
        beta,
        seed,
        x,
        y,
        z,
    })
}

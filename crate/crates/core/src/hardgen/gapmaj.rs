//! k-GAP-MAJ and the stacked quantile instance built from it.

use rand::Rng;

use super::{rng_for, Verdict};
use crate::error::{Error, Result};
use crate::model::exact_quantile;

const TAG_GAPMAJ: u64 = 0x6A9A;
const TAG_QUANTILE: u64 = 0x0A47;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GapMajInstance {
    pub k: usize,
    pub seed: u64,
    pub z: Vec<bool>,
}

impl GapMajInstance {
    pub fn validate(&self) -> Result<()> {
        if self.z.len() != self.k {
            return Err(Error::Structure(format!(
                "expected {} bits, got {}",
                self.k,
                self.z.len()
            )));
        }
        Ok(())
    }
}

pub fn gen_gap_maj(k: usize, seed: u64) -> Result<GapMajInstance> {
    if k == 0 {
        return Err(Error::param("k", "need at least one site"));
    }
    let mut rng = rng_for(seed, TAG_GAPMAJ);
    Ok(GapMajInstance {
        k,
        seed,
        z: (0..k).map(|_| rng.random()).collect(),
    })
}

/// 0 if `sum Z <= beta k - sqrt(beta k)`, 1 if `sum Z >= beta k + sqrt(beta k)`, else `*`.
pub fn gap_maj_eval(z: &[bool], beta: f64) -> Verdict {
    let s = z.iter().filter(|&&b| b).count() as f64;
    let centre = beta * z.len() as f64;
    let gap = centre.sqrt();
    if s <= centre - gap {
        Verdict::Zero
    } else if s >= centre + gap {
        Verdict::One
    } else {
        Verdict::Star
    }
}

/// Number of stacked copies, `round(1/(eps sqrt k))`.
pub fn quantile_rep(k: usize, eps: f64) -> usize {
    (1.0 / (eps * (k as f64).sqrt())).round() as usize
}

/// `l_rep` independent GAP-MAJ copies stacked into one multiset per site:
/// site `j` holds `{2i + Z[i][j] : 0 <= i < l_rep}`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantileInstance {
    pub k: usize,
    pub eps: f64,
    pub seed: u64,
    /// `z[i][j]`: bit of copy `i` at site `j`.
    pub z: Vec<Vec<bool>>,
    pub sites: Vec<Vec<u64>>,
}

impl QuantileInstance {
    pub fn copies(&self) -> usize {
        self.z.len()
    }

    pub fn union(&self) -> Vec<u64> {
        self.sites.iter().flatten().copied().collect()
    }

    /// The `(i + 1/2)/l_rep` quantile of the union minus `2i`, for every copy `i`.
    pub fn recover_copies(&self) -> Result<Vec<u64>> {
        let all = self.union();
        let l = self.copies() as f64;
        (0..self.copies())
            .map(|i| {
                let q = exact_quantile(&all, (i as f64 + 0.5) / l)?;
                q.checked_sub(2 * i as u64).ok_or_else(|| {
                    Error::Structure(format!("copy {i}: quantile {q} below its range"))
                })
            })
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.sites.len() != self.k || self.z.iter().any(|row| row.len() != self.k) {
            return Err(Error::Structure("dimensions disagree with k".into()));
        }
        for j in 0..self.k {
            let want: Vec<u64> = self
                .z
                .iter()
                .enumerate()
                .map(|(i, row)| 2 * i as u64 + row[j] as u64)
                .collect();
            if self.sites[j] != want {
                return Err(Error::Structure(format!(
                    "site {j} multiset disagrees with hidden bits"
                )));
            }
        }
        Ok(())
    }
}

pub fn gen_quantile_instance(k: usize, eps: f64, seed: u64) -> Result<QuantileInstance> {
    if k == 0 {
        return Err(Error::param("k", "need at least one site"));
    }
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::param("eps", format!("must lie in (0,1), got {eps}")));
    }
    let reps = quantile_rep(k, eps);
    if reps < 1 {
        return Err(Error::param(
            "eps",
            format!("round(1/(eps sqrt k)) = 0 for k = {k}, eps = {eps}; need at least one copy"),
        ));
    }
    let mut rng = rng_for(seed, TAG_QUANTILE);
    let z: Vec<Vec<bool>> = (0..reps)
        .map(|_| (0..k).map(|_| rng.random()).collect())
        .collect();
    let sites = (0..k)
        .map(|j| (0..reps).map(|i| 2 * i as u64 + z[i][j] as u64).collect())
        .collect();
    Ok(QuantileInstance {
        k,
        eps,
        seed,
        z,
        sites,
    })
}

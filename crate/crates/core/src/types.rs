use serde::{Deserialize, Serialize};

/// A fitted linear model in the coordinates of the data it was fitted on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub intercept: f64,
    pub coeffs: Vec<f64>,
    /// Residual M-scale `s_n` (frozen from the initial estimator for MM fits).
    pub scale: f64,
    /// Penalty level the fit was computed with.
    pub lambda: f64,
    pub iterations: usize,
    pub objective_trace: Vec<f64>,
    pub converged: bool,
}

impl FitResult {
    pub fn objective(&self) -> f64 {
        self.objective_trace.last().copied().unwrap_or(f64::NAN)
    }

    pub fn nonzero(&self) -> usize {
        self.coeffs.iter().filter(|&&b| b != 0.0).count()
    }

    pub fn l1_norm(&self) -> f64 {
        self.coeffs.iter().map(|b| b.abs()).sum()
    }
}

/// Outcome of a cross-validation sweep over penalty candidates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    pub candidates: Vec<f64>,
    /// Criterion per candidate; `None` when a fold fit failed.
    pub criterion: Vec<Option<f64>>,
    pub selected_index: usize,
    pub selected: f64,
}

impl CvResult {
    /// Picks the minimizer of `criterion`. Ties go to the larger candidate when
    /// `prefer_larger`, otherwise to the smaller one.
    pub(crate) fn select(
        candidates: Vec<f64>,
        criterion: Vec<Option<f64>>,
        prefer_larger: bool,
    ) -> crate::Result<Self> {
        let mut best: Option<(usize, f64)> = None;
        for (i, c) in criterion.iter().enumerate() {
            let Some(v) = *c else { continue };
            let better = match best {
                None => true,
                Some((bi, bv)) => {
                    v < bv
                        || (v == bv
                            && (if prefer_larger {
                                candidates[i] > candidates[bi]
                            } else {
                                candidates[i] < candidates[bi]
                            }))
                }
            };
            if better {
                best = Some((i, v));
            }
        }
        let (selected_index, _) = best.ok_or_else(|| {
            crate::Error::NoCandidate("every penalty candidate had a failed fold".into())
        })?;
        Ok(Self {
            selected: candidates[selected_index],
            candidates,
            criterion,
            selected_index,
        })
    }
}

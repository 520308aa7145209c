//! Branch walker shared by the steady and periodic tracers.
//!
//! Each step moves the parameter by `sign(det) * dp` and the state along the
//! Euler predictor, then corrects at fixed parameter. Steps that would cross a
//! fold (determinant sign change) or fail to correct are retried as dyadic
//! sub-steps, so emitted points always sit on the lattice `p0 + k dp` and the
//! walk turns around at folds with at most `dp / 2^max_halvings` overshoot.

use crate::error::{Error, Result};
use crate::model::CascadeState;
use crate::steady::{ContinuationSettings, StallGuard};

pub(crate) trait Branch {
    type Point: Copy;

    fn param(&self, pt: &Self::Point) -> f64;
    fn det_sign(&self, pt: &Self::Point) -> i8;
    /// Euler predictor to parameter `p_new`: state moves by `-J^-1 w (p_new - p)`.
    fn predict(&self, pt: &Self::Point, p_new: f64) -> Result<CascadeState>;
    /// Point at `(p, state)` without correction.
    fn evaluate(&self, p: f64, state: CascadeState) -> Result<Self::Point>;
    /// Corrected point at fixed `p`, or an error when the corrector is skipped or fails.
    fn correct(&self, p: f64, state: CascadeState) -> Result<Self::Point>;
}

pub(crate) fn walk<B: Branch>(
    branch: &B,
    start: B::Point,
    settings: &ContinuationSettings,
) -> Result<Vec<B::Point>> {
    settings.validate()?;
    let halvings = settings.max_halvings.min(20) as u32;
    let units: i64 = 1 << halvings;
    let unit = settings.dp / units as f64;
    let base = branch.param(&start);
    let orientation = i64::from(settings.direction_factor()) * i64::from(branch.det_sign(&start));
    let sub_step_cap = 64 * units as usize;

    let mut points = vec![start];
    let mut cur = start;
    let mut cur_units: i64 = 0;
    let mut stall = StallGuard::new(base, settings.dp);

    for step in 1..=settings.max_steps {
        let refine = settings.refine_every > 0 && step % settings.refine_every == 0;
        let anchor = cur_units;
        let mut pt = cur;
        let mut pt_units = cur_units;
        let mut level: u32 = 0;
        let mut sub_steps = 0usize;
        loop {
            sub_steps += 1;
            if sub_steps > sub_step_cap {
                return Err(Error::Stall {
                    p: branch.param(&pt),
                    steps: step,
                });
            }
            let size = units >> level;
            let dir = orientation * i64::from(branch.det_sign(&pt));
            let next_units = pt_units + dir * size;
            let p_new = base + next_units as f64 * unit;
            let finest = level >= halvings;
            // sub-steps are always corrected; only whole steps follow the cadence
            let corrected = branch.predict(&pt, p_new).and_then(|s| {
                if refine || level > 0 {
                    branch.correct(p_new, s).or_else(|e| {
                        if finest {
                            branch.evaluate(p_new, s)
                        } else {
                            Err(e)
                        }
                    })
                } else {
                    branch.evaluate(p_new, s)
                }
            });
            let accepted = match corrected {
                Ok(c) if finest || branch.det_sign(&c) == branch.det_sign(&pt) => Some(c),
                Ok(_) => None,
                Err(e) if finest => return Err(e),
                Err(_) => None,
            };
            match accepted {
                None => level += 1,
                Some(c) => {
                    pt = c;
                    pt_units = next_units;
                    if (pt_units - anchor).abs() == units || pt_units == anchor {
                        break;
                    }
                    while level > 0 && pt_units % (units >> (level - 1)) == 0 {
                        level -= 1;
                    }
                }
            }
        }
        if !settings.contains(branch.param(&pt)) {
            break;
        }
        stall.observe(branch.param(&pt), step)?;
        points.push(pt);
        cur = pt;
        cur_units = pt_units;
    }
    Ok(points)
}

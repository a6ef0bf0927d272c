//! Finite-difference gradient verification.
//!
//! [`grad_check`] compares reverse-mode gradients against central
//! differences, coordinate by coordinate. The relative error measure is
//! `|a - n| / max(|a|, |n|, 1e-8)` where `a` is the analytic value and `n`
//! the numeric one, and the reported result is the maximum over all
//! compared coordinates.
//!
//! Central differences cannot resolve gradients below the rounding noise of
//! the forward evaluation (about `|f| * 1e-16 / eps`), so coordinates whose
//! analytic gradient is smaller than [`GradCheckOptions::grad_floor`] are
//! skipped rather than compared against noise. For large models,
//! [`GradCheckOptions::max_coords_per_tensor`] limits the work to the
//! largest-gradient coordinates of each tensor, which still exercises every
//! parameter tensor of the model.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone)]
pub struct GradCheckOptions {
    /// Central-difference step.
    pub eps: f64,
    /// When set, check only the `k` largest-|gradient| coordinates of each
    /// parameter tensor.
    pub max_coords_per_tensor: Option<usize>,
    /// Skip coordinates whose analytic gradient magnitude is below this.
    pub grad_floor: f64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        GradCheckOptions {
            eps: 1e-6,
            max_coords_per_tensor: None,
            grad_floor: 0.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    pub coords_checked: usize,
    pub coords_skipped: usize,
    pub loss: f64,
}

/// Check reverse-mode gradients of a scalar function against central
/// finite differences.
///
/// `eval(params, want_grads)` returns the loss and, when asked, the
/// gradient tensors aligned with `params`. The unperturbed point supplies
/// the analytic gradients; every compared coordinate then costs two more
/// forward evaluations.
pub fn grad_check<F>(
    params: &[Tensor],
    eval: F,
    opts: &GradCheckOptions,
) -> Result<GradCheckReport>
where
    F: Fn(&[Tensor], bool) -> Result<(f64, Option<Vec<Tensor>>)>,
{
    if opts.eps <= 0.0 {
        return Err(Error::invalid(format!(
            "grad_check: eps must be > 0, got {}",
            opts.eps
        )));
    }
    let (loss, grads) = eval(params, true)?;
    if !loss.is_finite() {
        return Err(Error::numeric(format!("grad_check: loss is {loss}")));
    }
    let grads = grads.ok_or_else(|| Error::invalid("grad_check: eval returned no gradients"))?;
    if grads.len() != params.len() {
        return Err(Error::invalid(format!(
            "grad_check: {} gradient tensors for {} parameters",
            grads.len(),
            params.len()
        )));
    }

    let mut work: Vec<Tensor> = params.to_vec();
    let mut max_rel_err: f64 = 0.0;
    let mut coords_checked = 0;
    let mut coords_skipped = 0;

    for (ti, grad) in grads.iter().enumerate() {
        if grad.shape() != params[ti].shape() {
            return Err(Error::shape(format!(
                "grad_check: gradient {ti} has shape {:?}, parameter has {:?}",
                grad.shape(),
                params[ti].shape()
            )));
        }
        let coords = select_coords(grad, opts.max_coords_per_tensor);
        for ci in coords {
            let analytic = grad.data()[ci];
            if analytic.abs() < opts.grad_floor {
                coords_skipped += 1;
                continue;
            }
            let original = work[ti].data()[ci];
            work[ti].data_mut()[ci] = original + opts.eps;
            let (f_plus, _) = eval(&work, false)?;
            work[ti].data_mut()[ci] = original - opts.eps;
            let (f_minus, _) = eval(&work, false)?;
            work[ti].data_mut()[ci] = original;
            if !f_plus.is_finite() || !f_minus.is_finite() {
                return Err(Error::numeric(
                    "grad_check: non-finite loss at perturbed point",
                ));
            }
            let numeric = (f_plus - f_minus) / (2.0 * opts.eps);
            let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8);
            if rel > max_rel_err {
                max_rel_err = rel;
            }
            coords_checked += 1;
        }
    }

    Ok(GradCheckReport {
        max_rel_err,
        coords_checked,
        coords_skipped,
        loss,
    })
}

/// Indices to check: everything, or the `k` with largest |gradient|
/// (deterministic: ties resolved by index order).
fn select_coords(grad: &Tensor, max_coords: Option<usize>) -> Vec<usize> {
    match max_coords {
        None => (0..grad.len()).collect(),
        Some(k) if grad.len() <= k => (0..grad.len()).collect(),
        Some(k) => {
            let mut idx: Vec<usize> = (0..grad.len()).collect();
            idx.sort_by(|&a, &b| {
                grad.data()[b]
                    .abs()
                    .partial_cmp(&grad.data()[a].abs())
                    .unwrap_or(std::cmp::Ordering::Equal)
                    .then(a.cmp(&b))
            });
            idx.truncate(k);
            idx
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;
    use crate::tensor::{GateMode, ReduceKind, Tape};

    /// Quadratic form f(x) = x A x^T with known gradient (A + A^T) x.
    #[test]
    fn quadratic_form_matches_analytic() {
        let mut rng = Rng::new(12);
        let a = Tensor::glorot_uniform(5, 5, &mut rng).unwrap();
        let x = Tensor::glorot_uniform(1, 5, &mut rng).unwrap();

        let eval = |p: &[Tensor], want: bool| {
            let mut tape = Tape::new();
            let xv = tape.leaf(p[0].clone());
            let av = tape.leaf(a.clone());
            let xa = tape.matmul(xv, av)?;
            let prod = tape.mul(xa, xv)?;
            let loss = tape.sum_all(prod)?;
            let value = tape.value(loss).item()?;
            if want {
                tape.backward(loss)?;
                Ok((value, Some(vec![tape.grad(xv).clone()])))
            } else {
                Ok((value, None))
            }
        };

        let report = grad_check(&[x], eval, &GradCheckOptions::default()).unwrap();
        assert!(report.max_rel_err < 1e-8, "rel err {}", report.max_rel_err);
        assert_eq!(report.coords_checked, 5);
    }

    #[test]
    fn constant_function_has_zero_error() {
        let params = [Tensor::row(&[1.0, 2.0])];
        let eval = |p: &[Tensor], want: bool| {
            let grads = want.then(|| vec![Tensor::zeros(p[0].rows(), p[0].cols())]);
            Ok((4.25, grads))
        };
        let report = grad_check(&params, eval, &GradCheckOptions::default()).unwrap();
        assert_eq!(report.max_rel_err, 0.0);
    }

    /// Per-primitive finite-difference sweep: randomized inputs well away
    /// from relu/abs/hard-gate kink neighborhoods (|x| >= 1e-3), 100 trials.
    #[test]
    fn primitives_match_finite_differences() {
        let mut rng = Rng::new(1234);
        for trial in 0..100 {
            let n = 2 + (trial % 5);
            // Magnitudes in [0.1, 1.5] with random signs keep every kink at
            // distance >= 0.1.
            let sample = |rng: &mut Rng| -> Vec<f64> {
                (0..n)
                    .map(|_| {
                        let mag = rng.uniform(0.1, 1.5);
                        if rng.next_f64() < 0.5 {
                            -mag
                        } else {
                            mag
                        }
                    })
                    .collect()
            };
            let x = Tensor::row(&sample(&mut rng));
            let y = Tensor::row(&sample(&mut rng));
            let gamma = Tensor::row(&sample(&mut rng));
            let beta = Tensor::row(&sample(&mut rng));
            let kind = trial % 12;

            let eval = |p: &[Tensor], want: bool| {
                let mut tape = Tape::new();
                let xv = tape.leaf(p[0].clone());
                let yv = tape.leaf(p[1].clone());
                let gv = tape.leaf(p[2].clone());
                let bv = tape.leaf(p[3].clone());
                let out = match kind {
                    0 => tape.add(xv, yv)?,
                    1 => tape.sub(xv, yv)?,
                    2 => tape.mul(xv, yv)?,
                    3 => tape.scale(xv, -1.7),
                    4 => tape.relu(xv),
                    5 => tape.abs(xv),
                    6 => tape.tanh(xv),
                    7 => tape.sigmoid(xv),
                    8 => tape.layer_norm(xv, gv, bv, 1e-5)?,
                    9 => tape.l2_normalize_rows(xv, 1e-9),
                    10 => {
                        // soft gate over strictly positive inputs
                        let pos = tape.abs(xv);
                        let t = tape.constant(0.4);
                        tape.threshold_gate(pos, t, GateMode::Soft, 10.0)?
                    }
                    _ => {
                        let r = tape.reshape(xv, p[0].cols(), 1)?;
                        tape.matmul(yv, r)?
                    }
                };
                let loss = match trial % 2 {
                    0 => tape.reduce(out, ReduceKind::Sum)?,
                    _ => tape.reduce(out, ReduceKind::Mean)?,
                };
                let value = tape.value(loss).item()?;
                if want {
                    tape.backward(loss)?;
                    Ok((
                        value,
                        Some(vec![
                            tape.grad(xv).clone(),
                            tape.grad(yv).clone(),
                            tape.grad(gv).clone(),
                            tape.grad(bv).clone(),
                        ]),
                    ))
                } else {
                    Ok((value, None))
                }
            };

            let params = [x, y, gamma, beta];
            // Gradients below 1e-6 drown in central-difference rounding
            // noise (~|f| * 1e-16 / eps) and are skipped, not compared.
            let opts = GradCheckOptions {
                eps: 1e-5,
                grad_floor: 1e-6,
                ..GradCheckOptions::default()
            };
            let report = grad_check(&params, eval, &opts).unwrap();
            assert!(
                report.max_rel_err < 1e-4,
                "kind {kind} trial {trial}: rel err {}",
                report.max_rel_err
            );
        }
    }

    #[test]
    fn soft_gate_gradients_in_x_and_t() {
        let mut rng = Rng::new(55);
        for _ in 0..20 {
            let x: Vec<f64> = (0..6).map(|_| rng.uniform(0.05, 1.0)).collect();
            let t0 = rng.uniform(-0.2, 0.6);
            let params = [Tensor::row(&x), Tensor::scalar(t0)];
            let eval = |p: &[Tensor], want: bool| {
                let mut tape = Tape::new();
                let xv = tape.leaf(p[0].clone());
                let tv = tape.leaf(p[1].clone());
                let y = tape.threshold_gate(xv, tv, GateMode::Soft, 10.0)?;
                let loss = tape.mean_all(y)?;
                let value = tape.value(loss).item()?;
                if want {
                    tape.backward(loss)?;
                    Ok((
                        value,
                        Some(vec![tape.grad(xv).clone(), tape.grad(tv).clone()]),
                    ))
                } else {
                    Ok((value, None))
                }
            };
            let report = grad_check(&params, eval, &GradCheckOptions::default()).unwrap();
            assert!(report.max_rel_err < 1e-5, "rel err {}", report.max_rel_err);
        }
    }

    #[test]
    fn matmul_gradient_matches_finite_differences() {
        let mut rng = Rng::new(9);
        let a = Tensor::glorot_uniform(3, 4, &mut rng).unwrap();
        let b = Tensor::glorot_uniform(4, 2, &mut rng).unwrap();
        let eval = |p: &[Tensor], want: bool| {
            let mut tape = Tape::new();
            let av = tape.leaf(p[0].clone());
            let bv = tape.leaf(p[1].clone());
            let prod = tape.matmul(av, bv)?;
            let loss = tape.sum_all(prod)?;
            let value = tape.value(loss).item()?;
            if want {
                tape.backward(loss)?;
                Ok((
                    value,
                    Some(vec![tape.grad(av).clone(), tape.grad(bv).clone()]),
                ))
            } else {
                Ok((value, None))
            }
        };
        let report = grad_check(&[a, b], eval, &GradCheckOptions::default()).unwrap();
        assert!(report.max_rel_err < 1e-6, "rel err {}", report.max_rel_err);
    }

    #[test]
    fn top_k_coordinate_selection() {
        let g = Tensor::row(&[0.1, -5.0, 3.0, 0.01]);
        assert_eq!(select_coords(&g, Some(2)), vec![1, 2]);
        assert_eq!(select_coords(&g, None).len(), 4);
    }
}

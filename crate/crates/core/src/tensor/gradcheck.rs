//! Central finite-difference gradient checking.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Result, Tape, Tensor, TensorError, Var};

/// Settings for [`GradCheck::run`].
#[derive(Debug, Clone, Copy)]
pub struct GradCheck {
    pub eps: f64,
    /// Upper bound on the number of coordinates probed (sampled without
    /// replacement when more are eligible).
    pub max_coords: usize,
    pub seed: u64,
}

impl Default for GradCheck {
    fn default() -> Self {
        Self {
            eps: 1e-5,
            max_coords: 32,
            seed: 0,
        }
    }
}

/// Max relative error between analytic and central-difference gradients of
/// the scalar `f` over (a sample of) all input coordinates.
pub fn grad_check<F>(f: F, inputs: &[Tensor], eps: f64) -> Result<f64>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    GradCheck {
        eps,
        ..GradCheck::default()
    }
    .run(f, inputs)
}

impl GradCheck {
    pub fn run<F>(&self, f: F, inputs: &[Tensor]) -> Result<f64>
    where
        F: Fn(&mut Tape, &[Var]) -> Result<Var>,
    {
        self.run_filtered(f, inputs, |_, _, _| true)
    }

    /// Like [`GradCheck::run`], probing only coordinates for which
    /// `eligible(input_index, flat_index, value)` holds.
    ///
    /// Returns the relative error `|a - n| / max(|a|, |n|, 1e-8)` maximized
    /// over probed coordinates, or `0.0` when none are eligible.
    pub fn run_filtered<F, P>(&self, f: F, inputs: &[Tensor], eligible: P) -> Result<f64>
    where
        F: Fn(&mut Tape, &[Var]) -> Result<Var>,
        P: Fn(usize, usize, f64) -> bool,
    {
        let analytic = analytic_grads(&f, inputs)?;

        let mut coords = Vec::new();
        for (t, input) in inputs.iter().enumerate() {
            for (i, &v) in input.data().iter().enumerate() {
                if eligible(t, i, v) {
                    coords.push((t, i));
                }
            }
        }
        if coords.len() > self.max_coords {
            let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
            let picked = sample(&mut rng, coords.len(), self.max_coords);
            coords = picked.into_iter().map(|k| coords[k]).collect();
        }

        let mut worst: f64 = 0.0;
        let mut probe = inputs.to_vec();
        for (t, i) in coords {
            let orig = probe[t].data()[i];
            probe[t].data_mut()[i] = orig + self.eps;
            let plus = evaluate(&f, &probe)?;
            probe[t].data_mut()[i] = orig - self.eps;
            let minus = evaluate(&f, &probe)?;
            probe[t].data_mut()[i] = orig;

            let numeric = (plus - minus) / (2.0 * self.eps);
            let a = analytic[t].data()[i];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8);
            worst = worst.max(rel);
        }
        Ok(worst)
    }
}

fn evaluate<F>(f: &F, inputs: &[Tensor]) -> Result<f64>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.constant(t.clone())).collect();
    let out = f(&mut tape, &vars)?;
    scalar(&tape, out)
}

fn scalar(tape: &Tape, v: Var) -> Result<f64> {
    let t = tape.value(v);
    if t.len() != 1 {
        return Err(TensorError::NotScalar(t.shape().to_vec()));
    }
    Ok(t.data()[0])
}

fn analytic_grads<F>(f: &F, inputs: &[Tensor]) -> Result<Vec<Tensor>>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.param(t.clone())).collect();
    let out = f(&mut tape, &vars)?;
    scalar(&tape, out)?;
    tape.backward(out)?;
    Ok(vars
        .iter()
        .zip(inputs)
        .map(|(v, t)| tape.grad(*v).cloned().unwrap_or_else(|| Tensor::zeros(t.shape())))
        .collect())
}

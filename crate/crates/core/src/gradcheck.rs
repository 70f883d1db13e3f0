//! Central finite-difference gradient checks for tape ops and layers.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::nn::{ForwardCtx, Layer, Mode, ParamStore};
use crate::tensor::{Tape, Tensor, Var};

/// Step used for the central differences.
pub const FD_EPS: f64 = 1e-5;

/// Tensor of uniform values in `[-scale, scale)`.
pub fn random(rng: &mut ChaCha8Rng, shape: &[usize], scale: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(-scale..scale)).collect()).expect("shape matches data")
}

/// Relative error with a 1e-6 floor on the denominator.
pub fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-6)
}

/// Sum of `out` weighted by fixed pseudo-random coefficients.
pub fn project(tape: &mut Tape, out: Var, seed: u64) -> Result<Var> {
    let shape = tape.shape(out).to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = tape.constant(random(&mut rng, &shape, 1.0));
    let prod = tape.mul(out, w)?;
    tape.sum(prod, None)
}

/// Worst relative error between analytic and central-difference gradients
/// of a layer's projected output, over its input and every trainable
/// parameter.
pub fn layer_gradcheck<L: Layer>(layer: &L, store: &ParamStore, x: &Tensor, mode: Mode, seed: u64) -> Result<f64> {
    type Grads = Option<(Vec<f64>, ParamStore)>;
    let loss_of = |store: &ParamStore, x: &Tensor, grads: bool| -> Result<(f64, Grads)> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut ctx = match mode {
            Mode::Train => ForwardCtx::train(&mut rng),
            Mode::Eval => ForwardCtx::eval(),
        };
        let mut tape = Tape::new();
        let xv = tape.leaf(&x.clone().with_grad());
        let y = layer.forward(store, &mut tape, xv, &mut ctx)?;
        let loss = project(&mut tape, y, seed ^ 0x5eed)?;
        let value = tape.value(loss)[0];
        if !grads {
            return Ok((value, None));
        }
        let g = tape.backward(loss)?;
        let mut with_grads = store.clone();
        with_grads.accumulate(&g, &ctx)?;
        let gx = g.wrt(xv).map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; x.len()]);
        Ok((value, Some((gx, with_grads))))
    };

    let (_, analytic) = loss_of(store, x, true)?;
    let (gx, with_grads) = analytic.expect("gradients requested");
    let mut worst: f64 = 0.0;
    for i in 0..x.len() {
        let mut p = x.clone();
        p.data_mut()[i] += FD_EPS;
        let mut m = x.clone();
        m.data_mut()[i] -= FD_EPS;
        let numeric = (loss_of(store, &p, false)?.0 - loss_of(store, &m, false)?.0) / (2.0 * FD_EPS);
        worst = worst.max(rel_err(gx[i], numeric));
    }
    for (id, _, t) in store.iter() {
        if !t.requires_grad() {
            continue;
        }
        let analytic = with_grads.get(id).grad().map_or_else(|| vec![0.0; t.len()], <[f64]>::to_vec);
        for i in 0..t.len() {
            let mut p = store.clone();
            p.get_mut(id).data_mut()[i] += FD_EPS;
            let mut m = store.clone();
            m.get_mut(id).data_mut()[i] -= FD_EPS;
            let numeric = (loss_of(&p, x, false)?.0 - loss_of(&m, x, false)?.0) / (2.0 * FD_EPS);
            worst = worst.max(rel_err(analytic[i], numeric));
        }
    }
    Ok(worst)
}

/// Central-difference check of `build` (which must reduce to a scalar) with
/// respect to every input. Returns the worst relative error.
pub fn gradcheck(inputs: &[Tensor], build: impl Fn(&mut Tape, &[Var]) -> Result<Var>) -> Result<f64> {
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|x| tape.leaf(&x.clone().with_grad())).collect();
    let loss = build(&mut tape, &vars)?;
    let grads = tape.backward(loss)?;
    let eval = |xs: &[Tensor]| {
        let mut tape = Tape::new();
        let vars: Vec<Var> = xs.iter().map(|x| tape.leaf(x)).collect();
        let out = build(&mut tape, &vars)?;
        Ok::<f64, crate::Error>(tape.value(out)[0])
    };
    let mut worst: f64 = 0.0;
    for (k, v) in vars.iter().enumerate() {
        let analytic = grads.wrt(*v).map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; inputs[k].len()]);
        for i in 0..inputs[k].len() {
            let mut plus = inputs.to_vec();
            plus[k].data_mut()[i] += FD_EPS;
            let mut minus = inputs.to_vec();
            minus[k].data_mut()[i] -= FD_EPS;
            let numeric = (eval(&plus)? - eval(&minus)?) / (2.0 * FD_EPS);
            worst = worst.max(rel_err(analytic[i], numeric));
        }
    }
    Ok(worst)
}

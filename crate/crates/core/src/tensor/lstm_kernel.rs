//! Fused LSTM sequence kernel: forward recurrence and backpropagation through
//! time over batch-major buffers.
//!
//! Buffers are laid out batch-major: row `b * steps + t` holds sample `b` at
//! step `t`. Gate columns are ordered (input, forget, candidate, output).

use super::gemm::{gemm, MatMut, MatRef};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct LstmDims {
    pub batch: usize,
    pub steps: usize,
    pub input: usize,
    pub units: usize,
}

impl LstmDims {
    fn rows(&self) -> usize {
        self.batch * self.steps
    }
}

/// Saved forward values.
#[derive(Debug, Clone)]
pub(crate) struct LstmCache {
    /// Activated gates, `[B*T x 4U]`.
    pub gates: Vec<f64>,
    /// Cell states, `[B*T x U]`.
    pub cells: Vec<f64>,
    /// `tanh` of the cell states, `[B*T x U]`.
    pub cell_tanh: Vec<f64>,
    /// Hidden states, `[B*T x U]`.
    pub hidden: Vec<f64>,
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn forward(x: &[f64], w: &[f64], u: &[f64], bias: &[f64], d: LstmDims) -> LstmCache {
    let LstmDims {
        batch,
        steps,
        input,
        units,
    } = d;
    let g4 = 4 * units;
    let rows = d.rows();
    let mut gates = vec![0.0; rows * g4];
    let mut cells = vec![0.0; rows * units];
    let mut cell_tanh = vec![0.0; rows * units];
    let mut hidden = vec![0.0; rows * units];

    gemm(
        1.0,
        MatRef::dense(x, rows, input),
        MatRef::dense(w, input, g4),
        0.0,
        MatMut::dense(&mut gates, rows, g4),
    );
    for row in gates.chunks_mut(g4) {
        row.iter_mut().zip(bias).for_each(|(z, b)| *z += b);
    }

    for t in 0..steps {
        if t > 0 {
            let h_prev = MatRef {
                data: &hidden,
                offset: (t - 1) * units,
                rows: batch,
                cols: units,
                row_stride: steps * units,
                col_stride: 1,
            };
            let z_t = MatMut {
                data: &mut gates,
                offset: t * g4,
                rows: batch,
                cols: g4,
                row_stride: steps * g4,
                col_stride: 1,
            };
            gemm(1.0, h_prev, MatRef::dense(u, units, g4), 1.0, z_t);
        }
        for b in 0..batch {
            let row = b * steps + t;
            let z = &mut gates[row * g4..(row + 1) * g4];
            for k in 0..units {
                let i = sigmoid(z[k]);
                let f = sigmoid(z[units + k]);
                let g = z[2 * units + k].tanh();
                let o = sigmoid(z[3 * units + k]);
                z[k] = i;
                z[units + k] = f;
                z[2 * units + k] = g;
                z[3 * units + k] = o;
                let c_prev = if t > 0 { cells[(row - 1) * units + k] } else { 0.0 };
                let c = f * c_prev + i * g;
                let tc = c.tanh();
                cells[row * units + k] = c;
                cell_tanh[row * units + k] = tc;
                hidden[row * units + k] = o * tc;
            }
        }
    }
    LstmCache {
        gates,
        cells,
        cell_tanh,
        hidden,
    }
}

pub(crate) struct LstmGrads {
    pub dx: Vec<f64>,
    pub dw: Vec<f64>,
    pub du: Vec<f64>,
    pub db: Vec<f64>,
}

/// Backpropagation through time. `dh_out` is the upstream gradient on the
/// hidden states, `[B*T x U]` (zero rows for steps that were not emitted).
pub(crate) fn backward(
    dh_out: &[f64],
    x: &[f64],
    w: &[f64],
    u: &[f64],
    cache: &LstmCache,
    d: LstmDims,
) -> LstmGrads {
    let LstmDims {
        batch,
        steps,
        input,
        units,
    } = d;
    let g4 = 4 * units;
    let rows = d.rows();
    let mut dz = vec![0.0; rows * g4];
    let mut dh_rec = vec![0.0; batch * units];
    let mut dc_next = vec![0.0; batch * units];

    for t in (0..steps).rev() {
        for b in 0..batch {
            let row = b * steps + t;
            let gate = &cache.gates[row * g4..(row + 1) * g4];
            let dzr = &mut dz[row * g4..(row + 1) * g4];
            for k in 0..units {
                let i = gate[k];
                let f = gate[units + k];
                let g = gate[2 * units + k];
                let o = gate[3 * units + k];
                let c_prev = if t > 0 { cache.cells[(row - 1) * units + k] } else { 0.0 };
                let tc = cache.cell_tanh[row * units + k];
                let dh = dh_out[row * units + k] + dh_rec[b * units + k];
                let d_o = dh * tc;
                let dc = dh * o * (1.0 - tc * tc) + dc_next[b * units + k];
                dc_next[b * units + k] = dc * f;
                dzr[k] = dc * g * i * (1.0 - i);
                dzr[units + k] = dc * c_prev * f * (1.0 - f);
                dzr[2 * units + k] = dc * i * (1.0 - g * g);
                dzr[3 * units + k] = d_o * o * (1.0 - o);
            }
        }
        if t > 0 {
            let dz_t = MatRef {
                data: &dz,
                offset: t * g4,
                rows: batch,
                cols: g4,
                row_stride: steps * g4,
                col_stride: 1,
            };
            gemm(
                1.0,
                dz_t,
                MatRef::dense(u, units, g4).t(),
                0.0,
                MatMut::dense(&mut dh_rec, batch, units),
            );
        }
    }

    // Hidden state entering each step (zero at t = 0).
    let mut h_prev = vec![0.0; rows * units];
    for b in 0..batch {
        for t in 1..steps {
            let dst = (b * steps + t) * units;
            let src = (b * steps + t - 1) * units;
            h_prev[dst..dst + units].copy_from_slice(&cache.hidden[src..src + units]);
        }
    }

    let mut dw = vec![0.0; input * g4];
    let mut du = vec![0.0; units * g4];
    let mut dx = vec![0.0; rows * input];
    let mut db = vec![0.0; g4];
    gemm(
        1.0,
        MatRef::dense(x, rows, input).t(),
        MatRef::dense(&dz, rows, g4),
        0.0,
        MatMut::dense(&mut dw, input, g4),
    );
    gemm(
        1.0,
        MatRef::dense(&h_prev, rows, units).t(),
        MatRef::dense(&dz, rows, g4),
        0.0,
        MatMut::dense(&mut du, units, g4),
    );
    gemm(
        1.0,
        MatRef::dense(&dz, rows, g4),
        MatRef::dense(w, input, g4).t(),
        0.0,
        MatMut::dense(&mut dx, rows, input),
    );
    for row in dz.chunks(g4) {
        db.iter_mut().zip(row).for_each(|(acc, v)| *acc += v);
    }
    LstmGrads { dx, dw, du, db }
}

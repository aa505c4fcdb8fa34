//! GRU layers on the tape.
//!
//! Gate layout in the `3h` columns is `[reset, update, candidate]`, and the
//! reset gate scales the recurrent candidate term after the matrix product:
//!
//! ```text
//! r  = σ(x·W_r + b_ir + h·U_r + b_hr)
//! z  = σ(x·W_z + b_iz + h·U_z + b_hz)
//! n  = tanh(x·W_n + b_in + r ⊙ (h·U_n + b_hn))
//! h' = (1 - z) ⊙ n + z ⊙ h
//! ```

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{Tape, Tensor, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    Forward,
    Backward,
}

/// Borrowed weights of one GRU direction.
#[derive(Debug, Clone, Copy)]
pub struct GruWeights<'a> {
    pub w_ih: &'a Tensor,
    pub w_hh: &'a Tensor,
    pub b_ih: &'a Tensor,
    pub b_hh: &'a Tensor,
}

impl GruWeights<'_> {
    pub fn hidden(&self) -> usize {
        self.w_hh.rows()
    }

    pub fn input_dim(&self) -> usize {
        self.w_ih.rows()
    }

    fn validate(&self) -> Result<()> {
        let h = self.hidden();
        let ok = self.w_hh.cols() == 3 * h
            && self.w_ih.cols() == 3 * h
            && self.b_ih.len() == 3 * h
            && self.b_hh.len() == 3 * h;
        if ok {
            Ok(())
        } else {
            Err(Error::Shape(format!(
                "GRU weights w_ih {:?} w_hh {:?} b_ih {:?} b_hh {:?}",
                self.w_ih.shape(),
                self.w_hh.shape(),
                self.b_ih.shape(),
                self.b_hh.shape()
            )))
        }
    }
}

/// Parameter leaves of one GRU direction on a tape.
#[derive(Debug, Clone, Copy)]
pub(crate) struct GruVars {
    pub w_ih: Var,
    pub w_hh: Var,
    pub b_ih: Var,
    pub b_hh: Var,
    pub hidden: usize,
}

impl GruVars {
    pub fn bind<'p>(tape: &mut Tape<'p>, w: GruWeights<'p>) -> Result<Self> {
        w.validate()?;
        let h = w.hidden();
        Ok(Self {
            w_ih: tape.param(w.w_ih.rows(), 3 * h, w.w_ih.values())?,
            w_hh: tape.param(h, 3 * h, w.w_hh.values())?,
            b_ih: tape.param(1, 3 * h, w.b_ih.values())?,
            b_hh: tape.param(1, 3 * h, w.b_hh.values())?,
            hidden: h,
        })
    }
}

/// Runs one direction over `inputs` (T × d_in) and returns T × hidden.
pub(crate) fn gru_on_tape(tape: &mut Tape<'_>, vars: GruVars, inputs: Var, direction: Direction) -> Result<Var> {
    let (t_len, d_in) = tape.shape(inputs);
    let (w_rows, _) = tape.shape(vars.w_ih);
    if d_in != w_rows {
        return Err(Error::Shape(format!("GRU input dim {d_in}, weights expect {w_rows}")));
    }
    if t_len == 0 {
        return Err(Error::Empty("GRU input"));
    }
    let h = vars.hidden;
    let projected = tape.matmul(inputs, vars.w_ih)?;
    let projected = tape.add_row(projected, vars.b_ih)?;
    let mut state = tape.constant(1, h, vec![0.0; h])?;
    let mut outputs = vec![state; t_len];
    let order: Box<dyn Iterator<Item = usize>> = match direction {
        Direction::Forward => Box::new(0..t_len),
        Direction::Backward => Box::new((0..t_len).rev()),
    };
    for t in order {
        let xt = tape.row(projected, t)?;
        let hp = tape.matmul(state, vars.w_hh)?;
        let hp = tape.add_row(hp, vars.b_hh)?;
        let x_rz = tape.slice_cols(xt, 0, 2 * h)?;
        let h_rz = tape.slice_cols(hp, 0, 2 * h)?;
        let rz = tape.add(x_rz, h_rz)?;
        let rz = tape.sigmoid(rz);
        let r = tape.slice_cols(rz, 0, h)?;
        let z = tape.slice_cols(rz, h, h)?;
        let x_n = tape.slice_cols(xt, 2 * h, h)?;
        let h_n = tape.slice_cols(hp, 2 * h, h)?;
        let gated = tape.mul(r, h_n)?;
        let n = tape.add(x_n, gated)?;
        let n = tape.tanh(n);
        let keep = tape.affine(z, -1.0, 1.0);
        let fresh = tape.mul(keep, n)?;
        let carried = tape.mul(z, state)?;
        state = tape.add(fresh, carried)?;
        outputs[t] = state;
    }
    tape.stack_rows(&outputs)
}

/// Inference-only GRU layer: returns hidden states for every frame.
pub fn gru_layer_forward(weights: GruWeights<'_>, inputs: &Tensor, direction: Direction) -> Result<Tensor> {
    let mut tape = Tape::new();
    let vars = GruVars::bind(&mut tape, weights)?;
    let x = tape.constant(inputs.rows(), inputs.cols(), inputs.values().to_vec())?;
    let out = gru_on_tape(&mut tape, vars, x, direction)?;
    let (r, c) = tape.shape(out);
    Tensor::matrix(r, c, tape.value(out).to_vec())
}

//! LSTM cell and stacked bidirectional encoders.

use rand::Rng;

use crate::autodiff::{Graph, ParamId, ParamSet, Tensor, Var};
use crate::error::{Error, Result};

pub const RECURRENT_INIT_RANGE: f64 = 0.08;
pub const FORGET_BIAS_INIT: f64 = 1.0;

/// One LSTM kernel. Gates are computed from `[s_prev; x]` and stacked in the
/// order input, forget, output, candidate.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LstmParams {
    /// `[4*hidden x (hidden + input)]`
    pub kernel: ParamId,
    /// `[4*hidden]`
    pub bias: ParamId,
    pub input: usize,
    pub hidden: usize,
}

impl LstmParams {
    pub fn new(
        params: &mut ParamSet,
        name: &str,
        input: usize,
        hidden: usize,
        rng: &mut impl Rng,
    ) -> Self {
        let kernel = Tensor::uniform(&[4 * hidden, hidden + input], RECURRENT_INIT_RANGE, rng);
        let mut bias = Tensor::zeros(&[4 * hidden]);
        bias.data_mut()[hidden..2 * hidden].fill(FORGET_BIAS_INIT);
        Self {
            kernel: params.add(format!("{name}.kernel"), kernel),
            bias: params.add(format!("{name}.bias"), bias),
            input,
            hidden,
        }
    }
}

/// `c = f*c_prev + i*u`, `s = o*tanh(c)` with `i, f, o = sigmoid(.)` and
/// `u = tanh(.)` of `W [s_prev; x] + bias`.
pub fn lstm_cell(
    g: &mut Graph,
    x: Var,
    s_prev: Var,
    c_prev: Var,
    p: &LstmParams,
) -> Result<(Var, Var)> {
    let h = p.hidden;
    let joined = g.concat(&[s_prev, x])?;
    let w = g.param(p.kernel);
    let b = g.param(p.bias);
    let z = g.matmul(w, joined)?;
    let z = g.add(z, b)?;
    let i = g.slice(z, 0, h)?;
    let f = g.slice(z, h, h)?;
    let o = g.slice(z, 2 * h, h)?;
    let u = g.slice(z, 3 * h, h)?;
    let i = g.sigmoid(i)?;
    let f = g.sigmoid(f)?;
    let o = g.sigmoid(o)?;
    let u = g.tanh(u)?;
    let keep = g.mul(f, c_prev)?;
    let write = g.mul(i, u)?;
    let c = g.add(keep, write)?;
    let tc = g.tanh(c)?;
    let s = g.mul(o, tc)?;
    Ok((s, c))
}

/// Per-layer forward and backward kernels of a stacked bidirectional LSTM.
/// Layer `k > 0` reads the concatenated outputs of layer `k - 1`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BiRnnParams {
    pub layers: Vec<(LstmParams, LstmParams)>,
    pub hidden: usize,
}

impl BiRnnParams {
    pub fn new(
        params: &mut ParamSet,
        name: &str,
        input: usize,
        hidden: usize,
        layers: usize,
        rng: &mut impl Rng,
    ) -> Self {
        let layers = (0..layers)
            .map(|l| {
                let inp = if l == 0 { input } else { 2 * hidden };
                (
                    LstmParams::new(params, &format!("{name}.l{l}.fwd"), inp, hidden, rng),
                    LstmParams::new(params, &format!("{name}.l{l}.bwd"), inp, hidden, rng),
                )
            })
            .collect();
        Self { layers, hidden }
    }

    pub fn output_dim(&self) -> usize {
        2 * self.hidden
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EncoderOutput {
    /// `[N x 2h]`; row `i` is `[forward_i; backward_i]` of the top layer.
    pub states: Var,
    /// `[2h]`: last forward state joined with the last backward state
    /// (the one that has read position 0).
    pub final_state: Var,
}

fn run_direction(
    g: &mut Graph,
    inputs: &[Var],
    p: &LstmParams,
    reverse: bool,
) -> Result<Vec<Var>> {
    let zero = g.constant(&[p.hidden], vec![0.0; p.hidden])?;
    let (mut s, mut c) = (zero, zero);
    let mut out = vec![zero; inputs.len()];
    let order: Box<dyn Iterator<Item = usize>> = if reverse {
        Box::new((0..inputs.len()).rev())
    } else {
        Box::new(0..inputs.len())
    };
    for i in order {
        (s, c) = lstm_cell(g, inputs[i], s, c, p)?;
        out[i] = s;
    }
    Ok(out)
}

/// Encodes an embedded sequence `[N x d]`.
pub fn encode(g: &mut Graph, embedded: Var, params: &BiRnnParams) -> Result<EncoderOutput> {
    let n = match g.shape(embedded) {
        [n, _] => *n,
        _ => return Err(Error::EmptySequence),
    };
    if n == 0 {
        return Err(Error::EmptySequence);
    }
    let mut inputs = (0..n)
        .map(|i| g.row(embedded, i))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    let mut last = (inputs[0], inputs[0]);
    for (fwd_p, bwd_p) in &params.layers {
        let fwd = run_direction(g, &inputs, fwd_p, false)?;
        let bwd = run_direction(g, &inputs, bwd_p, true)?;
        last = (fwd[n - 1], bwd[0]);
        inputs = fwd
            .iter()
            .zip(&bwd)
            .map(|(f, b)| g.concat(&[*f, *b]))
            .collect::<std::result::Result<Vec<_>, _>>()?;
    }
    let states = g.stack_rows(&inputs)?;
    let final_state = g.concat(&[last.0, last.1])?;
    Ok(EncoderOutput {
        states,
        final_state,
    })
}

/// Background encoder; identical computation over its own parameters.
pub fn encode_background(
    g: &mut Graph,
    embedded: Var,
    params: &BiRnnParams,
) -> Result<EncoderOutput> {
    encode(g, embedded, params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn zero_cell(ps: &mut ParamSet, input: usize, hidden: usize) -> LstmParams {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let p = LstmParams::new(ps, "cell", input, hidden, &mut rng);
        ps.set(p.kernel, Tensor::zeros(&[4 * hidden, hidden + input])).unwrap();
        ps.set(p.bias, Tensor::zeros(&[4 * hidden])).unwrap();
        p
    }

    #[test]
    fn zero_weights_zero_cell_gives_zero() {
        let mut ps = ParamSet::new();
        let p = zero_cell(&mut ps, 2, 1);
        let mut g = Graph::with_params(&ps);
        let x = g.leaf(&Tensor::vector(vec![0.3, -0.7]));
        let z = g.leaf(&Tensor::vector(vec![0.0]));
        let (s, c) = lstm_cell(&mut g, x, z, z, &p).unwrap();
        assert_eq!(g.value(s), &[0.0]);
        assert_eq!(g.value(c), &[0.0]);
    }

    #[test]
    fn zero_weights_unit_cell_closed_form() {
        let mut ps = ParamSet::new();
        let p = zero_cell(&mut ps, 2, 1);
        let mut g = Graph::with_params(&ps);
        let x = g.leaf(&Tensor::vector(vec![0.3, -0.7]));
        let s0 = g.leaf(&Tensor::vector(vec![0.0]));
        let c0 = g.leaf(&Tensor::vector(vec![1.0]));
        let (s, c) = lstm_cell(&mut g, x, s0, c0, &p).unwrap();
        assert_eq!(g.value(c), &[0.5]);
        assert!((g.value(s)[0] - 0.5 * 0.5f64.tanh()).abs() < 1e-15);
    }

    #[test]
    fn forget_bias_starts_at_one() {
        let mut ps = ParamSet::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let p = LstmParams::new(&mut ps, "c", 3, 2, &mut rng);
        assert_eq!(ps.get(p.bias).data(), &[0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0]);
        assert!(ps.get(p.kernel).data().iter().all(|v| v.abs() <= 0.08));
    }

    fn setup(input: usize, hidden: usize, layers: usize, seed: u64) -> (ParamSet, BiRnnParams) {
        let mut ps = ParamSet::new();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = BiRnnParams::new(&mut ps, "enc", input, hidden, layers, &mut rng);
        (ps, p)
    }

    fn embedded(n: usize, d: usize, seed: u64) -> Tensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Tensor::uniform(&[n, d], 1.0, &mut rng)
    }

    #[test]
    fn output_shapes_follow_length() {
        let (ps, p) = setup(100, 100, 2, 1);
        let mut g = Graph::inference(&ps);
        let x = g.leaf(&embedded(7, 100, 2));
        let out = encode(&mut g, x, &p).unwrap();
        assert_eq!(g.shape(out.states), &[7, 200]);
        assert_eq!(g.shape(out.final_state), &[200]);
    }

    #[test]
    fn single_step_final_equals_state() {
        let (ps, p) = setup(4, 3, 2, 1);
        let mut g = Graph::inference(&ps);
        let x = g.leaf(&embedded(1, 4, 2));
        let out = encode(&mut g, x, &p).unwrap();
        assert_eq!(g.shape(out.states), &[1, 6]);
        assert_eq!(g.value(out.states), g.value(out.final_state));
    }

    #[test]
    fn final_joins_last_forward_and_last_backward() {
        let (ps, p) = setup(4, 3, 2, 1);
        let mut g = Graph::inference(&ps);
        let x = g.leaf(&embedded(5, 4, 2));
        let out = encode(&mut g, x, &p).unwrap();
        let states = g.tensor(out.states);
        let fin = g.value(out.final_state);
        assert_eq!(&fin[..3], &states.row(4)[..3]);
        assert_eq!(&fin[3..], &states.row(0)[3..]);
    }

    #[test]
    fn empty_sequence_is_rejected() {
        let (ps, p) = setup(4, 3, 1, 1);
        let mut g = Graph::inference(&ps);
        let x = g.leaf(&Tensor::zeros(&[0, 4]));
        assert!(matches!(encode(&mut g, x, &p), Err(Error::EmptySequence)));
        assert!(matches!(encode_background(&mut g, x, &p), Err(Error::EmptySequence)));
    }

    #[test]
    fn reversal_swaps_directions_with_tied_one_layer_weights() {
        let (mut ps, p) = setup(3, 4, 1, 5);
        let (fwd, bwd) = p.layers[0];
        let k = ps.get(fwd.kernel).clone();
        let b = ps.get(fwd.bias).clone();
        ps.set(bwd.kernel, k).unwrap();
        ps.set(bwd.bias, b).unwrap();
        let x = embedded(5, 3, 9);
        let rows: Vec<Vec<f64>> = (0..5).rev().map(|i| x.row(i).to_vec()).collect();
        let xr = Tensor::matrix(&rows).unwrap();

        let mut g = Graph::inference(&ps);
        let a = g.leaf(&x);
        let a = encode(&mut g, a, &p).unwrap();
        let r = g.leaf(&xr);
        let r = encode(&mut g, r, &p).unwrap();
        let (sa, sr) = (g.tensor(a.states), g.tensor(r.states));
        assert_ne!(sa, sr);
        for i in 0..5 {
            let (fa, ba) = sa.row(i).split_at(4);
            let (fr, br) = sr.row(4 - i).split_at(4);
            assert_eq!(fa, br);
            assert_eq!(ba, fr);
        }
    }

    #[test]
    fn separate_parameter_sets_give_different_outputs() {
        let mut ps = ParamSet::new();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let findings = BiRnnParams::new(&mut ps, "enc", 4, 3, 2, &mut rng);
        let background = BiRnnParams::new(&mut ps, "bg", 4, 3, 2, &mut rng);
        let mut g = Graph::inference(&ps);
        let x = g.leaf(&embedded(5, 4, 2));
        let a = encode(&mut g, x, &findings).unwrap();
        let b = encode_background(&mut g, x, &background).unwrap();
        assert_eq!(g.shape(b.states), &[5, 6]);
        assert_ne!(g.value(a.states), g.value(b.states));
    }

    #[test]
    fn encoding_is_deterministic() {
        let (ps, p) = setup(4, 3, 2, 1);
        let x = embedded(6, 4, 2);
        let run = || {
            let mut g = Graph::inference(&ps);
            let v = g.leaf(&x);
            let out = encode(&mut g, v, &p).unwrap();
            g.tensor(out.states)
        };
        assert_eq!(run(), run());
    }
}

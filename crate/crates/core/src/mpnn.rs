//! Message-passing encoder with weights shared across passes, mean-pool
//! readout and a two-layer tanh MLP head.
//!
//! Update rule: `h⁰ᵢ = E[xᵢ]`, `hˡ⁺¹ᵢ = tanh(hˡᵢ W_self + (Σ_{j∼i} hˡⱼ) W_nbr + b)`.
//! Readout: `y = tanh(mean(h) W₁ + b₁) W₂ + b₂`.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Adjacency, Gradients, Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::graph::{Decoration, Graph};

pub const DEFAULT_WIDTH: usize = 16;
pub const STATE_DIM: usize = 4;

pub const BLOCK_NAMES: [&str; 8] = [
    "embed",
    "w_self",
    "w_nbr",
    "bias",
    "readout_w1",
    "readout_b1",
    "readout_w2",
    "readout_b2",
];

#[derive(Clone, Debug, PartialEq)]
pub struct MpnnParams {
    pub width: usize,
    pub out_dim: usize,
    pub seed: u64,
    blocks: Vec<Tensor>,
}

fn block_shapes(width: usize, out_dim: usize) -> [(usize, usize); 8] {
    [
        (STATE_DIM, width),
        (width, width),
        (width, width),
        (1, width),
        (width, width),
        (1, width),
        (width, out_dim),
        (1, out_dim),
    ]
}

impl MpnnParams {
    pub fn zeros(width: usize, out_dim: usize) -> Self {
        let blocks = block_shapes(width, out_dim)
            .iter()
            .map(|&(r, c)| Tensor::zeros(r, c))
            .collect();
        MpnnParams {
            width,
            out_dim,
            seed: 0,
            blocks,
        }
    }

    /// Every block drawn uniformly with scale `1/sqrt(fan_in)`; embeddings
    /// with unit scale.
    pub fn random(width: usize, out_dim: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = Self::zeros(width, out_dim);
        p.seed = seed;
        for (k, b) in p.blocks.iter_mut().enumerate() {
            let fan_in = if k == 0 { 1 } else { b.rows().max(1) };
            let a = (3.0 / fan_in as f64).sqrt();
            b.data_mut().iter_mut().for_each(|x| *x = rng.random_range(-a..a));
        }
        p
    }

    /// Random hidden layers with a zero output layer, so the initial output
    /// is identically zero.
    pub fn zero_output(width: usize, out_dim: usize, seed: u64) -> Self {
        let mut p = Self::random(width, out_dim, seed);
        for k in [6, 7] {
            p.blocks[k].data_mut().iter_mut().for_each(|x| *x = 0.0);
        }
        p
    }

    /// Bias of the final readout layer, one entry per output.
    pub fn output_bias_mut(&mut self) -> &mut [f64] {
        self.blocks[7].data_mut()
    }

    pub fn blocks(&self) -> impl Iterator<Item = (&'static str, &Tensor)> {
        BLOCK_NAMES.iter().copied().zip(self.blocks.iter())
    }

    pub fn block(&self, name: &str) -> Option<&Tensor> {
        BLOCK_NAMES.iter().position(|&n| n == name).map(|k| &self.blocks[k])
    }

    pub fn num_params(&self) -> usize {
        self.blocks.iter().map(Tensor::len).sum()
    }

    /// Block offsets into the flat parameter vector.
    pub fn block_ranges(&self) -> Vec<(&'static str, std::ops::Range<usize>)> {
        let mut start = 0;
        BLOCK_NAMES
            .iter()
            .zip(&self.blocks)
            .map(|(&name, b)| {
                let r = start..start + b.len();
                start = r.end;
                (name, r)
            })
            .collect()
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.blocks.iter().flat_map(|b| b.data().iter().copied()).collect()
    }

    pub fn set_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.num_params() {
            return Err(Error::DimensionMismatch {
                expected: self.num_params(),
                got: flat.len(),
            });
        }
        let mut off = 0;
        for b in &mut self.blocks {
            let n = b.len();
            b.data_mut().copy_from_slice(&flat[off..off + n]);
            off += n;
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.blocks.iter().all(|b| b.data().iter().all(|x| x.is_finite()))
    }

    pub fn attach(&self, tape: &mut Tape) -> ParamVars {
        ParamVars(self.blocks.iter().map(|b| tape.leaf(b.clone())).collect())
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint {
            header: CheckpointHeader {
                format: CHECKPOINT_FORMAT.to_string(),
                version: 1,
                seed: self.seed,
                width: self.width,
                out_dim: self.out_dim,
                blocks: self
                    .blocks()
                    .map(|(name, b)| BlockInfo {
                        name: name.to_string(),
                        shape: [b.rows(), b.cols()],
                    })
                    .collect(),
                attrs: BTreeMap::new(),
            },
            data: self.flatten(),
        }
    }

    /// Reads the eight encoder blocks; extra blocks are ignored.
    pub fn from_checkpoint(c: &Checkpoint) -> Result<Self> {
        let mut p = Self::zeros(c.header.width, c.header.out_dim);
        p.seed = c.header.seed;
        for (k, name) in BLOCK_NAMES.iter().enumerate() {
            let data = c
                .block(name)
                .ok_or_else(|| Error::Config(format!("checkpoint lacks block {name}")))?;
            let want = p.blocks[k].shape();
            let got = c.block_shape(name).unwrap();
            if want != got {
                return Err(Error::Config(format!("block {name} has shape {got:?}, expected {want:?}")));
            }
            p.blocks[k].data_mut().copy_from_slice(data);
        }
        Ok(p)
    }
}

/// Tape handles for the eight parameter blocks.
pub struct ParamVars(Vec<Var>);

impl ParamVars {
    pub fn vars(&self) -> &[Var] {
        &self.0
    }

    /// Flat gradient in [`MpnnParams::flatten`] order.
    pub fn flat_grad(&self, tape: &Tape, grads: &Gradients) -> Vec<f64> {
        self.0.iter().flat_map(|&v| grads.get(tape, v).into_data()).collect()
    }
}

fn one_hot(deco: &Decoration) -> Tensor {
    let mut t = Tensor::zeros(deco.len(), STATE_DIM);
    for (i, s) in deco.0.iter().enumerate() {
        t.data_mut()[i * STATE_DIM + s.index()] = 1.0;
    }
    t
}

/// Records `passes` rounds of message passing and returns the `N × d`
/// embedding matrix.
pub fn encode(tape: &mut Tape, pv: &ParamVars, g: &Graph, deco: &Decoration, passes: usize) -> Result<Var> {
    deco.check_len(g)?;
    let [embed, w_self, w_nbr, bias, ..] = pv.0[..] else { unreachable!() };
    let x = tape.leaf(one_hot(deco));
    let mut h = tape.matmul(x, embed)?;
    if passes > 0 {
        let adj = Adjacency::from_graph(g);
        for _ in 0..passes {
            let own = tape.matmul(h, w_self)?;
            let agg = tape.neighbor_sum(&adj, h)?;
            let msg = tape.matmul(agg, w_nbr)?;
            let pre = tape.add(own, msg)?;
            let pre = tape.add_row(pre, bias)?;
            h = tape.tanh(pre);
        }
    }
    Ok(h)
}

/// Applies the readout MLP to a `1 × d` row.
pub fn readout_var(tape: &mut Tape, pv: &ParamVars, pooled: Var) -> Result<Var> {
    let [.., w1, b1, w2, b2] = pv.0[..] else { unreachable!() };
    let z = tape.matmul(pooled, w1)?;
    let z = tape.add_row(z, b1)?;
    let z = tape.tanh(z);
    let y = tape.matmul(z, w2)?;
    tape.add_row(y, b2)
}

/// Encoder, mean pooling and readout; returns `(pooled, output)`.
pub fn forward_var(tape: &mut Tape, pv: &ParamVars, g: &Graph, deco: &Decoration, passes: usize) -> Result<(Var, Var)> {
    let h = encode(tape, pv, g, deco, passes)?;
    let pooled = tape.mean_rows(h)?;
    let out = readout_var(tape, pv, pooled)?;
    Ok((pooled, out))
}

/// Node embeddings `H ∈ R^{N×d}` after `passes` rounds.
pub fn mpnn_forward(params: &MpnnParams, g: &Graph, deco: &Decoration, passes: usize) -> Result<Tensor> {
    let mut tape = Tape::new();
    let pv = params.attach(&mut tape);
    let h = encode(&mut tape, &pv, g, deco, passes)?;
    Ok(tape.value(h).clone())
}

/// Mean of the node embeddings.
pub fn pooled_embedding(params: &MpnnParams, g: &Graph, deco: &Decoration, passes: usize) -> Result<Vec<f64>> {
    let mut tape = Tape::new();
    let pv = params.attach(&mut tape);
    let h = encode(&mut tape, &pv, g, deco, passes)?;
    let p = tape.mean_rows(h)?;
    Ok(tape.value(p).data().to_vec())
}

/// Readout MLP applied to a pooled feature.
pub fn readout(params: &MpnnParams, pooled: &[f64]) -> Result<Vec<f64>> {
    let mut tape = Tape::new();
    let pv = params.attach(&mut tape);
    let p = tape.leaf(Tensor::row_vector(pooled.to_vec()));
    let y = readout_var(&mut tape, &pv, p)?;
    Ok(tape.value(y).data().to_vec())
}

/// Pooled readout `MLP(mean_i H_i)`.
pub fn pooled_readout(params: &MpnnParams, g: &Graph, deco: &Decoration, passes: usize) -> Result<Vec<f64>> {
    let mut tape = Tape::new();
    let pv = params.attach(&mut tape);
    let (_, y) = forward_var(&mut tape, &pv, g, deco, passes)?;
    Ok(tape.value(y).data().to_vec())
}

pub const CHECKPOINT_FORMAT: &str = "sparse-mfc-params";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockInfo {
    pub name: String,
    pub shape: [usize; 2],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub format: String,
    pub version: u32,
    pub seed: u64,
    pub width: usize,
    pub out_dim: usize,
    pub blocks: Vec<BlockInfo>,
    #[serde(default)]
    pub attrs: BTreeMap<String, String>,
}

/// Parameter file: one line of JSON header terminated by `\n`, then every
/// block in header order as row-major little-endian `f64`.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub header: CheckpointHeader,
    pub data: Vec<f64>,
}

impl Checkpoint {
    fn offset_of(&self, name: &str) -> Option<(usize, usize)> {
        let mut off = 0;
        for b in &self.header.blocks {
            let n = b.shape[0] * b.shape[1];
            if b.name == name {
                return Some((off, n));
            }
            off += n;
        }
        None
    }

    pub fn block(&self, name: &str) -> Option<&[f64]> {
        self.offset_of(name).map(|(o, n)| &self.data[o..o + n])
    }

    pub fn block_shape(&self, name: &str) -> Option<(usize, usize)> {
        self.header
            .blocks
            .iter()
            .find(|b| b.name == name)
            .map(|b| (b.shape[0], b.shape[1]))
    }

    pub fn push_block(&mut self, name: &str, rows: usize, cols: usize, data: &[f64]) {
        self.header.blocks.push(BlockInfo {
            name: name.to_string(),
            shape: [rows, cols],
        });
        self.data.extend_from_slice(data);
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = serde_json::to_vec(&self.header).expect("header serializes");
        out.push(b'\n');
        for x in &self.data {
            out.extend_from_slice(&x.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8], origin: &Path) -> Result<Self> {
        let nl = bytes
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| Error::parse(origin, "checkpoint header is not terminated"))?;
        let header: CheckpointHeader =
            serde_json::from_slice(&bytes[..nl]).map_err(|e| Error::parse(origin, e.to_string()))?;
        if header.format != CHECKPOINT_FORMAT {
            return Err(Error::parse(origin, format!("unknown format {:?}", header.format)));
        }
        let expected: usize = header.blocks.iter().map(|b| b.shape[0] * b.shape[1]).sum();
        let body = &bytes[nl + 1..];
        if body.len() != expected * 8 {
            return Err(Error::parse(
                origin,
                format!("expected {} bytes of parameters, found {}", expected * 8, body.len()),
            ));
        }
        let data = body
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok(Checkpoint { header, data })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?, path)
    }
}

/// Writes to a sibling temporary file and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = std::path::PathBuf::from(tmp);
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::census::{empirical_distribution, KeyMode};
    use crate::graph::{extract_neighborhood, generate, permute_decoration, GraphKind, GraphSpec, NodeState};

    fn triangles(count: usize) -> Graph {
        generate(&GraphSpec::new(GraphKind::Cliques { count, size: 3 }, 0)).unwrap()
    }

    #[test]
    fn zero_passes_is_pure_embedding() {
        let p = MpnnParams::random(8, 3, 1);
        let g = generate(&GraphSpec::new(GraphKind::Grid { width: 3, height: 3 }, 0)).unwrap();
        let deco = Decoration::parse("SIRVSSIRV").unwrap();
        let h = mpnn_forward(&p, &g, &deco, 0).unwrap();
        let embed = p.block("embed").unwrap();
        for i in 0..9 {
            assert_eq!(h.row(i), embed.row(deco.0[i].index()));
        }
    }

    #[test]
    fn distinct_states_give_distinct_embeddings() {
        let p = MpnnParams::random(8, 3, 2);
        let g = triangles(1);
        let a = mpnn_forward(&p, &g, &Decoration::parse("SSS").unwrap(), 2).unwrap();
        let b = mpnn_forward(&p, &g, &Decoration::parse("III").unwrap(), 2).unwrap();
        assert_ne!(a, b);
    }

    #[test]
    fn permutation_equivariance() {
        let p = MpnnParams::random(8, 3, 3);
        let g = generate(&GraphSpec::new(GraphKind::Er { n: 12, d: 2.5 }, 4)).unwrap();
        let deco = Decoration((0..12).map(|i| NodeState::from_index(i % 4)).collect());
        let perm: Vec<usize> = (0..12).map(|i| (i * 5 + 3) % 12).collect();
        let h = mpnn_forward(&p, &g, &deco, 3).unwrap();
        let hp = mpnn_forward(&p, &g.permute(&perm), &permute_decoration(&deco, &perm), 3).unwrap();
        for i in 0..12 {
            for (a, b) in h.row(i).iter().zip(hp.row(perm[i])) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn pooling_equals_census_expectation_on_triangles() {
        let p = MpnnParams::random(16, 4, 5);
        let g = triangles(20);
        let mut deco = Decoration::uniform(60, NodeState::Susceptible);
        for c in [1, 4, 9, 13, 17] {
            deco.0[3 * c + 1] = NodeState::Infected;
        }
        let pooled = pooled_embedding(&p, &g, &deco, 1).unwrap();
        let census = empirical_distribution(&g, &deco, 1, KeyMode::Exact).unwrap();
        assert_eq!(census.len(), 3);
        let mut expect = vec![0.0; 16];
        for (k, e) in census.iter() {
            let rep = &e.representative;
            let h = mpnn_forward(&p, &rep.graph, &rep.decoration(), 1).unwrap();
            for (x, &v) in expect.iter_mut().zip(h.row(0)) {
                *x += census.mass(k) * v;
            }
        }
        for (a, b) in pooled.iter().zip(&expect) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn root_embedding_only_sees_its_ball() {
        let p = MpnnParams::random(8, 2, 6);
        let g = generate(&GraphSpec::new(GraphKind::Grid { width: 6, height: 5 }, 0)).unwrap();
        let deco = Decoration((0..30).map(|i| NodeState::from_index((i * 7) % 4)).collect());
        let h = mpnn_forward(&p, &g, &deco, 2).unwrap();
        for root in [0, 8, 14, 29] {
            let nb = extract_neighborhood(&g, &deco, root, 2).unwrap();
            let local = mpnn_forward(&p, &nb.graph, &nb.decoration(), 2).unwrap();
            for (a, b) in h.row(root).iter().zip(local.row(0)) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn checkpoint_round_trip() {
        let p = MpnnParams::random(5, 7, 9);
        let mut c = p.to_checkpoint();
        c.header.attrs.insert("sigma".into(), "3".into());
        c.push_block("time_bias", 1, 3, &[1.0, 2.0, 3.0]);
        let bytes = c.to_bytes();
        let back = Checkpoint::from_bytes(&bytes, Path::new("mem")).unwrap();
        assert_eq!(back, c);
        assert_eq!(MpnnParams::from_checkpoint(&back).unwrap(), p);
        assert_eq!(back.block("time_bias").unwrap(), &[1.0, 2.0, 3.0]);
        let header_len = bytes.iter().position(|&b| b == b'\n').unwrap() + 1;
        assert_eq!(bytes.len() - header_len, 8 * (p.num_params() + 3));
        assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 1], Path::new("mem")).is_err());
    }

    #[test]
    fn zero_output_init_is_zero() {
        let p = MpnnParams::zero_output(8, 18, 1);
        let g = triangles(2);
        let y = pooled_readout(&p, &g, &Decoration::parse("ISSSIS").unwrap(), 2).unwrap();
        assert!(y.iter().all(|&v| v == 0.0));
    }
}

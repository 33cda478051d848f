use serde::{Deserialize, Serialize};

use super::config::{ModelConfig, UpdateKind};
use super::params::ModelParams;
use super::prepared::{GeoPlan, GraphRef, KindPlan, PreparedGraph, PurePlan};
use crate::error::{MfnError, Result};
use crate::linalg::RMat;
use crate::operator::{OperatorStack, SlotLayout};
use std::sync::Arc;
use crate::train::{Tape, Var};

/// Graph-level output with the contribution of every layer's readout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    /// Class logits or a single regression value.
    pub output: Vec<f64>,
    pub layer_readouts: Vec<Vec<f64>>,
}

/// Operator of one matrix-function layer as recorded on the tape.
#[derive(Debug, Clone)]
pub struct OperatorRecord {
    pub layer: usize,
    pub layout: Arc<SlotLayout>,
    /// Before normalization, including any carried previous output.
    pub raw: Var,
    pub normalized: Var,
}

/// Recorded forward pass.
#[derive(Debug)]
pub struct Recorded {
    pub tape: Tape,
    pub output: Var,
    pub layer_readouts: Vec<Var>,
    pub operators: Vec<OperatorRecord>,
}

impl Recorded {
    /// Raw and normalized operator stacks of every matrix-function layer.
    pub fn operator_stacks(&self) -> Result<Vec<(OperatorStack, OperatorStack)>> {
        self.operators
            .iter()
            .map(|o| {
                let mk = |v: Var| OperatorStack::new((*o.layout).clone(), o.layer, self.tape.value(v).clone());
                Ok((mk(o.raw)?, mk(o.normalized)?))
            })
            .collect()
    }

    pub fn prediction(&self) -> Prediction {
        let row = |v: Var| self.tape.value(v).row(0).to_vec();
        Prediction {
            output: row(self.output),
            layer_readouts: self.layer_readouts.iter().map(|&v| row(v)).collect(),
        }
    }
}

/// Lazily records parameter leaves on a tape and collects the operator
/// records of matrix-function layers.
pub(crate) struct Binder<'a> {
    params: &'a ModelParams,
    vars: Vec<Option<Var>>,
    operators: Vec<OperatorRecord>,
}

impl<'a> Binder<'a> {
    pub(crate) fn new(params: &'a ModelParams) -> Self {
        Self {
            params,
            vars: vec![None; params.len()],
            operators: Vec::new(),
        }
    }

    pub(crate) fn get(&mut self, tape: &mut Tape, name: &str) -> Result<Var> {
        let i = self.params.index_of(name)?;
        if let Some(v) = self.vars[i] {
            return Ok(v);
        }
        let v = tape.param(i, &self.params.values()[i]);
        self.vars[i] = Some(v);
        Ok(v)
    }
}

/// Output of one matrix-function layer: `f(H)` on the graph layout or on
/// the complete layout.
#[derive(Clone, Copy)]
struct FOut {
    var: Var,
    full: bool,
}

fn linear(tape: &mut Tape, x: Var, w: Var, b: Var) -> Result<Var> {
    let y = tape.matmul(x, w)?;
    tape.add_bias(y, b)
}

/// `h' = GELU(h W_self + Â h W_nbr + b)` with `Â = D^{-1/2} A D^{-1/2}`.
pub(crate) fn gcn_on_tape(tape: &mut Tape, plan: &PurePlan, h: Var, ws: Var, wn: Var, b: Var) -> Result<Var> {
    let own = tape.matmul(h, ws)?;
    let agg = tape.spmm(plan.adj_norm.clone(), h)?;
    let nbr = tape.matmul(agg, wn)?;
    let s = tape.add(own, nbr)?;
    let s = tape.add_bias(s, b)?;
    Ok(tape.gelu(s))
}

/// `Σ_j R(r_ij) Y(r̂_ij) ⊙ src_j` where `src` holds one row per node.
pub(crate) fn messages_on_tape(tape: &mut Tape, plan: &GeoPlan, src: Var, radial: Var) -> Result<Var> {
    let b = tape.constant(plan.b_dir.clone());
    let r = tape.matmul(b, radial)?;
    let s = tape.gather(src, plan.dir_src.clone())?;
    let q = tape.mul(s, r)?;
    tape.spmm(plan.ycoef.clone(), q)
}

/// Normalise, add the previous layer's `f` if the update asks for it, and
/// apply the matrix function.
fn matfn_stage(
    tape: &mut Tape,
    bind: &mut Binder,
    prep: &PreparedGraph,
    config: &ModelConfig,
    t: usize,
    h: Var,
    prev: Option<FOut>,
) -> Result<FOut> {
    let layer = &config.layers[t];
    let full = config.full_output(t);
    let mut h = h;
    if full {
        let cp = prep
            .complete
            .as_ref()
            .ok_or_else(|| MfnError::Internal("missing complete layout".into()))?;
        h = tape.spmm(cp.embed.clone(), h)?;
    }
    if let Some(p) = prev {
        let prev_var = match (layer.update, full, p.full) {
            (UpdateKind::Diag, _, _) => None,
            (_, true, true) | (_, false, false) => Some(p.var),
            (_, false, true) => {
                let cp = prep.complete.as_ref().expect("full output implies complete layout");
                Some(tape.gather(p.var, cp.restrict.clone())?)
            }
            (_, true, false) => {
                let cp = prep.complete.as_ref().expect("full output implies complete layout");
                Some(tape.spmm(cp.embed.clone(), p.var)?)
            }
        };
        if let Some(pv) = prev_var {
            h = tape.add(h, pv)?;
        }
    }
    let plan = if full {
        &prep.complete.as_ref().unwrap().plan
    } else {
        &prep.graph
    };
    let hn = tape.normalize(h, plan.norm.clone())?;
    bind.operators.push(OperatorRecord {
        layer: t,
        layout: plan.layout.clone(),
        raw: h,
        normalized: hn,
    });
    let poles = bind.get(tape, &format!("layer{t}.poles"))?;
    let f = tape.matfn(hn, poles, config.y_min, plan.layout.clone(), layer.backend)?;
    Ok(FOut { var: f, full })
}

fn edge_rows_of(prep: &PreparedGraph, f: FOut) -> std::sync::Arc<Vec<usize>> {
    if f.full {
        let cp = prep.complete.as_ref().expect("full output implies complete layout");
        std::sync::Arc::new(prep.edge_rows.iter().map(|&r| cp.restrict[r]).collect())
    } else {
        prep.edge_rows.clone()
    }
}

fn readout(tape: &mut Tape, bind: &mut Binder, t: usize, node_scalars: Var) -> Result<Var> {
    let pooled = tape.mean_rows(node_scalars)?;
    if t == 0 {
        let w = bind.get(tape, "readout0.w")?;
        let b = bind.get(tape, "readout0.b")?;
        linear(tape, pooled, w, b)
    } else {
        let w1 = bind.get(tape, &format!("readout{t}.w1"))?;
        let b1 = bind.get(tape, &format!("readout{t}.b1"))?;
        let w2 = bind.get(tape, &format!("readout{t}.w2"))?;
        let b2 = bind.get(tape, &format!("readout{t}.b2"))?;
        let hid = linear(tape, pooled, w1, b1)?;
        let hid = tape.gelu(hid);
        linear(tape, hid, w2, b2)
    }
}

fn record_pure(
    tape: &mut Tape,
    bind: &mut Binder,
    prep: &PreparedGraph,
    plan: &PurePlan,
    config: &ModelConfig,
) -> Result<(Var, Vec<Var>)> {
    let emb = bind.get(tape, "node_embedding")?;
    let mut h = tape.gather(emb, plan.labels.clone())?;
    let any_mfn = config.layers.iter().any(|l| l.matrix_function);
    let mut e = if any_mfn {
        let ee = bind.get(tape, "edge_embedding")?;
        Some(tape.gather(ee, plan.edge_labels.clone())?)
    } else {
        None
    };
    let mut prev = None;
    let mut readouts = Vec::with_capacity(config.layers.len());
    for (t, layer) in config.layers.iter().enumerate() {
        let p = |s: &str| format!("layer{t}.{s}");
        let ws = bind.get(tape, &p("gcn.w_self"))?;
        let wn = bind.get(tape, &p("gcn.w_nbr"))?;
        let b = bind.get(tape, &p("gcn.b"))?;
        h = gcn_on_tape(tape, plan, h, ws, wn, b)?;
        if layer.matrix_function {
            let ev = e.expect("edge features exist when a layer has a matrix function");
            let hi = tape.gather(h, plan.slot_i.clone())?;
            let hj = tape.gather(h, plan.slot_j.clone())?;
            let sum = tape.add(hi, hj)?;
            let prod = tape.mul(hi, hj)?;
            let se = bind.get(tape, &p("self_embedding"))?;
            let es_diag = tape.spmm(plan.diag_sel.clone(), se)?;
            let es_edge = tape.spmm(plan.edge_sel.clone(), ev)?;
            let es = tape.add(es_diag, es_edge)?;
            let x = tape.concat_cols(&[sum, prod, es])?;
            let (w1, b1) = (bind.get(tape, &p("mlp.w1"))?, bind.get(tape, &p("mlp.b1"))?);
            let (w2, b2) = (bind.get(tape, &p("mlp.w2"))?, bind.get(tape, &p("mlp.b2"))?);
            let hid = linear(tape, x, w1, b1)?;
            let hid = tape.gelu(hid);
            let op = linear(tape, hid, w2, b2)?;
            let f = matfn_stage(tape, bind, prep, config, t, op, prev)?;
            let d = tape.gather(f.var, prep.first_column.clone())?;
            let mixer = bind.get(tape, &p("mixer"))?;
            let upd = tape.matmul(d, mixer)?;
            h = tape.add(h, upd)?;
            let fe = tape.gather(f.var, edge_rows_of(prep, f))?;
            let (ew1, eb1) = (bind.get(tape, &p("edge.w1"))?, bind.get(tape, &p("edge.b1"))?);
            let (ew2, eb2) = (bind.get(tape, &p("edge.w2"))?, bind.get(tape, &p("edge.b2"))?);
            let eh = linear(tape, fe, ew1, eb1)?;
            let eh = tape.gelu(eh);
            let de = linear(tape, eh, ew2, eb2)?;
            e = Some(tape.add(ev, de)?);
            prev = Some(f);
        }
        readouts.push(readout(tape, bind, t, h)?);
    }
    Ok((h, readouts))
}

fn record_geometric(
    tape: &mut Tape,
    bind: &mut Binder,
    prep: &PreparedGraph,
    plan: &GeoPlan,
    config: &ModelConfig,
) -> Result<(Var, Vec<Var>)> {
    let emb = bind.get(tape, "species_embedding")?;
    let h0 = tape.gather(emb, plan.species.clone())?;
    let mut h = h0;
    let mut prev = None;
    let mut readouts = Vec::with_capacity(config.layers.len());
    for (t, layer) in config.layers.iter().enumerate() {
        let p = |s: &str| format!("layer{t}.{s}");
        let radial = bind.get(tape, &p("local.radial"))?;
        let ws = bind.get(tape, &p("local.w_self"))?;
        let v = if t == 0 {
            let msg = messages_on_tape(tape, plan, h0, radial)?;
            let own = tape.matmul(h0, ws)?;
            let own = tape.spmm(plan.scalar_place.clone(), own)?;
            tape.add(msg, own)?
        } else {
            let s = tape.gather(h, plan.scalar_rows.clone())?;
            let w_in = bind.get(tape, &p("local.w_in"))?;
            let u = tape.matmul(s, w_in)?;
            let u = tape.gelu(u);
            let msg = messages_on_tape(tape, plan, u, radial)?;
            let own = tape.matmul(h, ws)?;
            tape.add(msg, own)?
        };
        h = v;
        if layer.matrix_function {
            let proj = bind.get(tape, &p("op.proj"))?;
            let vm = tape.matmul(v, proj)?;
            let gi = tape.gather(vm, plan.gi.clone())?;
            let gj = tape.gather(vm, plan.gj.clone())?;
            let b_edge = tape.constant(plan.b_edge.clone());
            let wr = bind.get(tape, &p("op.radial"))?;
            let re = tape.matmul(b_edge, wr)?;
            let re = tape.spmm(plan.edge_entries.clone(), re)?;
            let c = layer.channels;
            let ind = RMat::from_fn(plan.diag_indicator.len(), c, |r, _| plan.diag_indicator[r]);
            let ind = tape.constant(ind);
            let rs = tape.add(re, ind)?;
            let prod = tape.mul(gi, gj)?;
            let mut op = tape.mul(prod, rs)?;
            if config.transport {
                let ts = bind.get(tape, &p("op.transport_s"))?;
                let tp = bind.get(tape, &p("op.transport_p"))?;
                let cs = tape.matmul(b_edge, ts)?;
                let cs = tape.spmm(plan.ss.clone(), cs)?;
                let cp = tape.matmul(b_edge, tp)?;
                let cp = tape.spmm(plan.pp.clone(), cp)?;
                op = tape.add(op, cs)?;
                op = tape.add(op, cp)?;
            }
            let f = matfn_stage(tape, bind, prep, config, t, op, prev)?;
            let d = tape.gather(f.var, prep.first_column.clone())?;
            let mixer = bind.get(tape, &p("mixer"))?;
            let upd = tape.matmul(d, mixer)?;
            h = tape.add(v, upd)?;
            prev = Some(f);
        }
        let scalars = tape.gather(h, plan.scalar_rows.clone())?;
        readouts.push(readout(tape, bind, t, scalars)?);
    }
    Ok((h, readouts))
}

/// Records the forward pass of `prep` on a fresh tape.
pub fn record(prep: &PreparedGraph, params: &ModelParams, config: &ModelConfig) -> Result<Recorded> {
    let mut tape = Tape::new();
    let mut bind = Binder::new(params);
    let (_, readouts) = match &prep.kind {
        KindPlan::Pure(plan) => record_pure(&mut tape, &mut bind, prep, plan, config)?,
        KindPlan::Geometric(plan) => record_geometric(&mut tape, &mut bind, prep, plan, config)?,
    };
    let mut out = readouts[0];
    for &r in &readouts[1..] {
        out = tape.add(out, r)?;
    }
    let rec = Recorded {
        tape,
        output: out,
        layer_readouts: readouts,
        operators: bind.operators,
    };
    if rec.tape.value(out).as_slice().iter().any(|v| !v.is_finite()) {
        return Err(MfnError::Numerical("non-finite model output".into()));
    }
    Ok(rec)
}

/// Full forward pass of one graph.
pub fn forward(graph: GraphRef<'_>, params: &ModelParams, config: &ModelConfig) -> Result<Prediction> {
    let prep = PreparedGraph::new(graph, config)?;
    Ok(record(&prep, params, config)?.prediction())
}

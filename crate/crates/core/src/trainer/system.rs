//! Residual rows compiled against deduplicated network evaluation slots.

use std::collections::HashMap;
use std::ops::Range;

use rayon::prelude::*;

use super::sampling::{Collocation, PointKind};
use super::{TrainApproach, TrainError};
use crate::discretization::{
    assemble_point, dirichlet_row, pinn_bulk_row, pinn_interface_row, AffineResidual, AssemblyOptions, BiasMode,
    EvalKind, Evaluation, ProblemSpec, Side,
};
use crate::geometry::{cell_geometry, Point};
use crate::model::{JetCotangent, SurrogatePair, Workspace};

/// Number of outputs an evaluation slot provides.
const OUTPUTS: usize = 7;
const CHUNK: usize = 256;
const AXES: [Point; 3] = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Slot {
    pub side: Side,
    pub pos: Point,
    pub kind: EvalKind,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Row {
    pub terms: Vec<(u32, u8, f64)>,
    pub constant: f64,
    /// `1/diag`
    pub scale: f64,
    pub weight: f64,
}

/// Rows of all collocation points; point `p` owns `rows[point_rows[p]]`.
#[derive(Clone, Debug)]
pub struct ResidualSystem {
    pub slots: Vec<Slot>,
    pub rows: Vec<Row>,
    pub point_rows: Vec<Range<usize>>,
    pub point_side: Vec<Side>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SystemOptions {
    pub approach: TrainApproach,
    pub bias: BiasMode,
    pub multires_levels: usize,
}

impl Default for SystemOptions {
    fn default() -> Self {
        Self { approach: TrainApproach::Regression, bias: BiasMode::Slow, multires_levels: 1 }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Hash)]
struct SlotKey([i64; 3], u8, u8, [i64; 3]);

fn quantize(p: Point) -> [i64; 3] {
    p.map(|v| (v * 1e9).round() as i64)
}

fn slot_key(e: &Evaluation) -> SlotKey {
    let (tag, dir) = match e.kind {
        EvalKind::Value => (0, [0; 3]),
        EvalKind::Directional(d) => (1, quantize(d)),
        EvalKind::AxisJet2 => (2, [0; 3]),
    };
    SlotKey(quantize(e.pos), e.side as u8, tag, dir)
}

/// PINN groups: bulk, boundary, interface.
fn pinn_rows(
    spec: &ProblemSpec,
    c: &Collocation,
) -> Result<Vec<(AffineResidual, usize)>, TrainError> {
    if c.kind == PointKind::Boundary || spec.boundary_distance(c.x) <= 0.0 {
        return Ok(vec![(dirichlet_row(spec, c.x)?, 1)]);
    }
    let mut rows = vec![(pinn_bulk_row(spec, c.x)?, 0)];
    let near = c.kind == PointKind::Interface || cell_geometry(&spec.phi, c.x, c.h)?.crossed;
    if near {
        rows.push((pinn_interface_row(spec, c.x, c.h)?, 2));
    }
    Ok(rows)
}

impl ResidualSystem {
    pub fn build(spec: &ProblemSpec, points: &[Collocation], opts: &SystemOptions) -> Result<Self, TrainError> {
        if opts.multires_levels == 0 {
            return Err(TrainError::InvalidConfig("multires_levels must be at least 1".into()));
        }
        let aopts = AssemblyOptions { approach: opts.approach.assembly(), bias: opts.bias };
        // (row, group) per point; group weights are 1/N or 1/N_group
        let assembled: Vec<Result<Vec<(AffineResidual, usize)>, TrainError>> = points
            .par_iter()
            .map(|c| match opts.approach {
                TrainApproach::PinnBaseline => pinn_rows(spec, c),
                _ => (0..opts.multires_levels)
                    .map(|l| {
                        let h = c.h / (1u64 << l) as f64;
                        Ok((assemble_point(spec, c.x, h, &aopts)?, 0))
                    })
                    .collect(),
            })
            .collect();
        let assembled: Vec<Vec<(AffineResidual, usize)>> = assembled.into_iter().collect::<Result<_, _>>()?;
        let mut group_count = [0usize; 3];
        match opts.approach {
            TrainApproach::PinnBaseline => {
                for rows in &assembled {
                    for (_, g) in rows {
                        group_count[*g] += 1;
                    }
                }
            }
            _ => group_count[0] = points.len(),
        }
        let mut index: HashMap<SlotKey, u32> = HashMap::new();
        let mut slots = Vec::new();
        let mut rows = Vec::new();
        let mut point_rows = Vec::with_capacity(points.len());
        for per_point in assembled {
            let start = rows.len();
            for (res, group) in per_point {
                let mut terms: Vec<(u32, u8, f64)> = res
                    .form
                    .terms
                    .iter()
                    .map(|(e, o, c)| {
                        let id = *index.entry(slot_key(e)).or_insert_with(|| {
                            slots.push(Slot { side: e.side, pos: e.pos, kind: e.kind });
                            (slots.len() - 1) as u32
                        });
                        (id, *o, *c)
                    })
                    .collect();
                terms.sort_by_key(|t| (t.0, t.1));
                let mut merged: Vec<(u32, u8, f64)> = Vec::with_capacity(terms.len());
                for t in terms {
                    match merged.last_mut() {
                        Some(m) if m.0 == t.0 && m.1 == t.1 => m.2 += t.2,
                        _ => merged.push(t),
                    }
                }
                rows.push(Row {
                    terms: merged,
                    constant: res.form.constant,
                    scale: 1.0 / res.diag,
                    weight: 1.0 / group_count[group].max(1) as f64,
                });
            }
            point_rows.push(start..rows.len());
        }
        let point_side = points.iter().map(|c| spec.side_of(c.x).map_err(TrainError::from)).collect::<Result<_, _>>()?;
        Ok(Self { slots, rows, point_rows, point_side })
    }

    pub fn num_points(&self) -> usize {
        self.point_rows.len()
    }

    fn used_slots(&self, points: &[usize]) -> Vec<u32> {
        let mut mark = vec![false; self.slots.len()];
        for &p in points {
            for r in &self.rows[self.point_rows[p].clone()] {
                for t in &r.terms {
                    mark[t.0 as usize] = true;
                }
            }
        }
        (0..self.slots.len() as u32).filter(|&i| mark[i as usize]).collect()
    }

    fn forward(&self, pair: &SurrogatePair, used: &[u32]) -> Vec<[f64; OUTPUTS]> {
        let computed: Vec<[f64; OUTPUTS]> = used
            .par_iter()
            .map_init(Workspace::default, |ws, &s| slot_outputs(pair, &self.slots[s as usize], ws))
            .collect();
        let mut out = vec![[0.0; OUTPUTS]; self.slots.len()];
        for (&s, v) in used.iter().zip(computed) {
            out[s as usize] = v;
        }
        out
    }

    fn residual(&self, row: &Row, outputs: &[[f64; OUTPUTS]]) -> f64 {
        row.terms.iter().map(|&(s, o, c)| c * outputs[s as usize][o as usize]).sum::<f64>() + row.constant
    }

    /// `Σ_{p ∈ points} Σ_rows w (r/diag)²`.
    pub fn loss(&self, pair: &SurrogatePair, points: &[usize]) -> f64 {
        let used = self.used_slots(points);
        let outputs = self.forward(pair, &used);
        let mut loss = 0.0;
        for &p in points {
            for row in &self.rows[self.point_rows[p].clone()] {
                let r = self.residual(row, &outputs) * row.scale;
                loss += row.weight * r * r;
            }
        }
        loss
    }

    /// Loss over `points` and its gradient for the networks flagged in
    /// `active` (indexed by [`Side::index`]); inactive gradients stay zero.
    pub fn loss_and_grads(&self, pair: &SurrogatePair, points: &[usize], active: [bool; 2]) -> (f64, [Vec<f64>; 2]) {
        let used = self.used_slots(points);
        let stride = pair.net_minus.cache_len().max(pair.net_plus.cache_len());
        let chunks: Vec<(Vec<[f64; OUTPUTS]>, Vec<f64>)> = used
            .par_chunks(CHUNK)
            .map(|chunk| {
                let mut ws = Workspace::default();
                let mut cache = vec![0.0; 2 * stride * chunk.len()];
                let vals = chunk
                    .iter()
                    .zip(cache.chunks_mut(2 * stride))
                    .map(|(&s, c)| {
                        let slot = &self.slots[s as usize];
                        match slot.kind {
                            EvalKind::Value if active[slot.side.index()] => {
                                let (acts, dact) = c.split_at_mut(stride);
                                let mut out = [0.0; OUTPUTS];
                                out[0] = pair.net(slot.side).forward_cached(slot.pos, acts, dact);
                                out
                            }
                            _ => slot_outputs(pair, slot, &mut ws),
                        }
                    })
                    .collect();
                (vals, cache)
            })
            .collect();
        let mut outputs = vec![[0.0; OUTPUTS]; self.slots.len()];
        for (&s, v) in used.iter().zip(chunks.iter().flat_map(|c| c.0.iter())) {
            outputs[s as usize] = *v;
        }
        let mut cot = vec![[0.0; OUTPUTS]; self.slots.len()];
        let mut loss = 0.0;
        for &p in points {
            for row in &self.rows[self.point_rows[p].clone()] {
                let r = self.residual(row, &outputs) * row.scale;
                loss += row.weight * r * r;
                let g = 2.0 * row.weight * r * row.scale;
                for &(s, o, c) in &row.terms {
                    cot[s as usize][o as usize] += g * c;
                }
            }
        }
        let sizes = [pair.net_minus.num_params(), pair.net_plus.num_params()];
        let partial: Vec<[Vec<f64>; 2]> = used
            .par_chunks(CHUNK)
            .zip(chunks.par_iter())
            .map(|(chunk, (_, cache))| {
                let mut grads = [vec![0.0; sizes[0]], vec![0.0; sizes[1]]];
                let mut ws = Workspace::default();
                for (&s, c) in chunk.iter().zip(cache.chunks(2 * stride)) {
                    let slot = &self.slots[s as usize];
                    let side = slot.side.index();
                    if !active[side] {
                        continue;
                    }
                    if let EvalKind::Value = slot.kind {
                        let (acts, dact) = c.split_at(stride);
                        pair.net(slot.side).backward_cached(acts, dact, cot[s as usize][0], &mut grads[side], &mut ws);
                    } else {
                        slot_backward(pair, slot, &cot[s as usize], &mut grads[side], &mut ws);
                    }
                }
                grads
            })
            .collect();
        let mut grads = [vec![0.0; sizes[0]], vec![0.0; sizes[1]]];
        for part in partial {
            for side in 0..2 {
                for (g, p) in grads[side].iter_mut().zip(&part[side]) {
                    *g += p;
                }
            }
        }
        (loss, grads)
    }
}

fn slot_outputs(pair: &SurrogatePair, slot: &Slot, ws: &mut Workspace) -> [f64; OUTPUTS] {
    let net = pair.net(slot.side);
    let mut out = [0.0; OUTPUTS];
    match slot.kind {
        EvalKind::Value => out[0] = net.forward(slot.pos),
        EvalKind::Directional(d) => {
            let j = net.jet(slot.pos, &[d], false, ws);
            out[0] = j.value;
            out[1] = j.d1[0];
        }
        EvalKind::AxisJet2 => {
            let j = net.jet(slot.pos, &AXES, true, ws);
            out[0] = j.value;
            out[1..4].copy_from_slice(&j.d1);
            out[4..7].copy_from_slice(&j.d2);
        }
    }
    out
}

fn slot_backward(pair: &SurrogatePair, slot: &Slot, cot: &[f64; OUTPUTS], grad: &mut [f64], ws: &mut Workspace) {
    if cot.iter().all(|&c| c == 0.0) {
        return;
    }
    let net = pair.net(slot.side);
    match slot.kind {
        EvalKind::Value => {
            net.forward_backward(slot.pos, cot[0], grad, ws);
        }
        EvalKind::Directional(d) => {
            let c = JetCotangent { value: cot[0], d1: [cot[1], 0.0, 0.0], d2: [0.0; 3] };
            net.jet_backward(slot.pos, &[d], false, &c, grad, ws);
        }
        EvalKind::AxisJet2 => {
            let c = JetCotangent { value: cot[0], d1: [cot[1], cot[2], cot[3]], d2: [cot[4], cot[5], cot[6]] };
            net.jet_backward(slot.pos, &AXES, true, &c, grad, ws);
        }
    }
}

/// Network outputs of `pair` in the layout of [`EvalKind`].
pub fn pair_outputs(pair: &SurrogatePair) -> impl Fn(&Evaluation, u8) -> f64 + '_ {
    move |e, o| {
        let slot = Slot { side: e.side, pos: e.pos, kind: e.kind };
        slot_outputs(pair, &slot, &mut Workspace::default())[o as usize]
    }
}

/// `Σ_ℓ (r/diag)²` for cells of size `h/2^ℓ`, `ℓ = 0..levels`, at `center`.
pub fn multires_residual(
    spec: &ProblemSpec,
    pair: &SurrogatePair,
    center: Point,
    h: f64,
    levels: usize,
    opts: &AssemblyOptions,
) -> Result<f64, TrainError> {
    let u = pair_outputs(pair);
    let mut sum = 0.0;
    for l in 0..levels {
        let row = assemble_point(spec, center, h / (1u64 << l) as f64, opts)?;
        let r = row.evaluate(&u);
        sum += (r.residual / r.diag).powi(2);
    }
    Ok(sum)
}

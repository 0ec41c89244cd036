//! Query planning and execution over PIM memory.
//!
//! Non-grouped aggregates run entirely through the PIM primitives: filter,
//! mask, in-array reduction, host fold of one partial per page. GROUP BY
//! splits the groups between PIM (one masked aggregation per group) and a
//! single host pass over the records no PIM group claimed. The host pass
//! always runs, so groups the sample missed are still reported.

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::isa::{
    self, read_filter_bits, sum_width, AggKind, ArithExpr, Circuit, CmpOp, Compiler, Folded, IsaError, MaskedSource,
    Pages, Partials, PimProgram, PredicateExpr,
};
use crate::layout::{PimMemory, SlotRange};
use crate::oracle::{self, agg_input, AggState, OracleError};
use crate::queryparse::{AggregateSpec, QueryIR};
use crate::result::{AggValue, ResultRow, ResultTable};
use crate::stats::TransferStats;

pub const DEFAULT_SAMPLE_FRACTION: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EngineError {
    #[error(transparent)]
    Isa(#[from] IsaError),
    #[error(transparent)]
    Resolve(#[from] OracleError),
    #[error("sample fraction {0} outside (0, 1]")]
    BadSampleFraction(f64),
}

/// Where aggregation happens.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
pub enum EngineMode {
    /// Every aggregate and every estimated group on PIM.
    #[default]
    #[serde(rename = "pim")]
    Pim,
    /// Groups split between PIM and host by the cost model.
    #[serde(rename = "hybrid-groupby")]
    HybridGroupBy,
    /// PIM filter only; the host reads selected records and aggregates.
    #[serde(rename = "pim-filter")]
    FilterOnly,
}

impl EngineMode {
    pub fn name(self) -> &'static str {
        match self {
            EngineMode::Pim => "pim",
            EngineMode::HybridGroupBy => "hybrid-groupby",
            EngineMode::FilterOnly => "pim-filter",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CostParams {
    pub c_pim_op: f64,
    pub c_bit_xfer: f64,
    pub c_host_rec: f64,
    pub c_periph_row: f64,
}

impl Default for CostParams {
    fn default() -> Self {
        CostParams { c_pim_op: 1.0, c_bit_xfer: 4.0, c_host_rec: 16.0, c_periph_row: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EngineConfig {
    pub mode: EngineMode,
    pub circuit: Circuit,
    pub params: CostParams,
    pub sample_fraction: f64,
    pub seed: u64,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            mode: EngineMode::Pim,
            circuit: Circuit::PurePim,
            params: CostParams::default(),
            sample_fraction: DEFAULT_SAMPLE_FRACTION,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupEstimate {
    pub key: Vec<i64>,
    pub sampled: u64,
    pub estimate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupEstimates {
    pub sample_fraction: f64,
    /// Sorted by key.
    pub groups: Vec<GroupEstimate>,
    /// Set when the sample was partial, so some groups may be missing.
    pub unseen_mass_flag: bool,
}

impl GroupEstimates {
    pub fn estimate(&self, key: &[i64]) -> Option<f64> {
        self.groups.binary_search_by(|g| g.key.as_slice().cmp(key)).ok().map(|i| self.groups[i].estimate)
    }

    pub fn total(&self) -> f64 {
        self.groups.iter().map(|g| g.estimate).sum()
    }
}

/// Linear cost model for one grouped query.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostModel {
    /// Cost of aggregating one group on PIM, independent of its size.
    pub pim_group_cost: f64,
    /// Host cost per selected record (transfer plus processing).
    pub host_record_cost: f64,
}

impl CostModel {
    pub fn host_cost(&self, estimate: f64) -> f64 {
        self.host_record_cost * estimate
    }
}

/// Modeled cost of sending `pim_groups` to PIM and everything else to host.
pub fn cost_of(pim_groups: &BTreeSet<Vec<i64>>, estimates: &GroupEstimates, model: &CostModel) -> f64 {
    let (pim, host) = estimates.groups.iter().partition::<Vec<_>, _>(|g| pim_groups.contains(&g.key));
    let host_records: f64 = host.iter().map(|g| g.estimate).sum();
    pim.len() as f64 * model.pim_group_cost + model.host_cost(host_records)
}

/// Greedy split: largest groups first, PIM while strictly cheaper than
/// the host; ties and everything after the first loss go to the host.
pub fn choose_groups(estimates: &GroupEstimates, model: &CostModel) -> BTreeSet<Vec<i64>> {
    let mut order: Vec<&GroupEstimate> = estimates.groups.iter().collect();
    order.sort_by(|a, b| b.estimate.total_cmp(&a.estimate).then_with(|| a.key.cmp(&b.key)));
    let mut pim = BTreeSet::new();
    for g in order {
        if model.pim_group_cost < model.host_cost(g.estimate) {
            pim.insert(g.key.clone());
        } else {
            break;
        }
    }
    pim
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlanCosts {
    pub chosen: f64,
    pub pure_pim: f64,
    pub pure_host: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Route {
    Pim,
    Host,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryPlan {
    pub mode: EngineMode,
    pub circuit: Circuit,
    pub aggregates: Vec<String>,
    /// Route of each aggregate for non-grouped queries.
    pub routes: Vec<Route>,
    pub group_by: Vec<String>,
    /// In-array ops of one aggregation template (per page).
    pub template_ops: usize,
    pub estimates: Option<GroupEstimates>,
    pub model: Option<CostModel>,
    pub pim_groups: Vec<Vec<i64>>,
    pub host_groups: Vec<Vec<i64>>,
    pub costs: Option<PlanCosts>,
}

impl QueryPlan {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plan serializes")
    }
}

/// Samples records uniformly (each independently with probability
/// `fraction`) and scales group counts by `1 / fraction`. Sampled group
/// values are read through the charged facade.
pub fn estimate_groups(
    memory: &PimMemory,
    group_attrs: &[String],
    fraction: f64,
    seed: u64,
) -> Result<GroupEstimates, EngineError> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(EngineError::BadSampleFraction(fraction));
    }
    for a in group_attrs {
        memory.layout().attr(a).map_err(IsaError::from)?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut counts: BTreeMap<Vec<i64>, u64> = BTreeMap::new();
    for i in 0..memory.record_count() {
        if rng.gen::<f64>() < fraction {
            let key = group_attrs.iter().map(|a| memory.read_attr(i, a)).collect::<Result<Vec<_>, _>>().map_err(IsaError::from)?;
            *counts.entry(key).or_default() += 1;
        }
    }
    Ok(GroupEstimates {
        sample_fraction: fraction,
        groups: counts
            .into_iter()
            .map(|(key, n)| GroupEstimate { key, sampled: n, estimate: n as f64 / fraction })
            .collect(),
        unseen_mass_flag: fraction < 1.0,
    })
}

/// Aggregation piece: one masked source and, for pure PIM, its reduced partial.
struct Piece {
    masked: MaskedSource,
    partial: Option<SlotRange>,
}

struct Template {
    /// Group mask (grouped queries only).
    mask: Option<SlotRange>,
    /// `pieces[0]` is the selection count.
    pieces: Vec<Piece>,
    /// Index into `pieces` for each aggregate.
    slots: Vec<usize>,
}

fn key_predicate(group_by: &[String], key: &[i64]) -> Option<PredicateExpr> {
    group_by
        .iter()
        .zip(key)
        .map(|(g, v)| PredicateExpr::cmp_imm(g.clone(), CmpOp::Eq, *v))
        .reduce(|a, b| a.and(b))
}

fn build_template(
    c: &mut Compiler<'_>,
    aggs: &[AggregateSpec],
    group: Option<(&PredicateExpr, SlotRange)>,
    selection: SlotRange,
    circuit: Circuit,
    rows: usize,
) -> Result<Template, IsaError> {
    let mask = match group {
        Some((key_pred, claimed)) => {
            let k = c.predicate(Some(key_pred))?;
            let m = c.and_cols(k, selection)?;
            c.discard(k);
            c.or_into(claimed, m);
            Some(m)
        }
        None => None,
    };
    let m = mask.unwrap_or(selection);
    let mut pieces = vec![Piece { masked: c.mask(m, false, m, AggKind::Count)?, partial: None }];
    let mut slots = Vec::with_capacity(aggs.len());
    for a in aggs {
        let kind = match a.kind {
            AggKind::Count => {
                slots.push(0);
                continue;
            }
            AggKind::Avg => AggKind::Sum,
            k => k,
        };
        let expr = a.expr.as_ref().ok_or_else(|| IsaError::Unsupported(format!("{}(*)", a.kind.name())))?;
        let masked = match expr {
            ArithExpr::Attr(name) => {
                let p = c.layout().attr(name)?;
                let (src, signed) = (p.slot_range(), p.spec.signed);
                c.mask(src, signed, m, kind)?
            }
            e => {
                let src = c.arith(e, None)?;
                let masked = c.mask(src, false, m, kind)?;
                c.discard(src);
                masked
            }
        };
        slots.push(pieces.len());
        pieces.push(Piece { masked, partial: None });
    }
    if circuit == Circuit::PurePim {
        for p in &mut pieces {
            p.partial = Some(c.reduction_tree(&p.masked, rows)?);
            c.discard(p.masked.range);
        }
    }
    Ok(Template { mask, pieces, slots })
}

/// Frees every scratch range a template left allocated.
fn free_template(memory: &mut PimMemory, t: &Template) {
    for p in &t.pieces {
        let _ = isa::release(memory, p.partial.unwrap_or(p.masked.range));
    }
    if let Some(m) = t.mask {
        let _ = isa::release(memory, m);
    }
}

/// Runs a compiled template's reductions and folds them on the host.
/// Returns `None` when the mask selected nothing.
fn fold_template(memory: &mut PimMemory, t: &Template, aggs: &[AggregateSpec], circuit: Circuit) -> Result<Option<Vec<AggValue>>, IsaError> {
    let pages: Vec<usize> = (0..memory.page_count()).collect();
    let mut folded = Vec::with_capacity(t.pieces.len());
    for p in &t.pieces {
        let partials = match (circuit, p.partial) {
            (Circuit::PurePim, Some(range)) => Partials {
                kind: p.masked.kind,
                range,
                signed: p.masked.signed,
                biased: p.masked.biased,
                source_width: p.masked.width(),
                pages: pages.clone(),
            },
            _ => isa::pim_aggregate(memory, &p.masked, Circuit::Peripheral)?,
        };
        let v = isa::host_fold(memory, &partials);
        if circuit == Circuit::Peripheral {
            let _ = isa::release(memory, partials.range);
        }
        folded.push(match v? {
            Folded::Value(v) => Some(v),
            Folded::Empty => None,
        });
    }
    let count = folded[0].unwrap_or(0);
    if count == 0 {
        return Ok(None);
    }
    Ok(Some(
        aggs.iter()
            .zip(&t.slots)
            .map(|(a, &s)| match a.kind {
                AggKind::Count => AggValue::Int(count),
                AggKind::Avg => AggValue::avg(folded[s].unwrap_or(0), count),
                _ => folded[s].map_or(AggValue::Null, AggValue::Int),
            })
            .collect(),
    ))
}

fn run_program(memory: &mut PimMemory, program: &PimProgram) -> Result<(), IsaError> {
    isa::exec_program(memory, program, &Pages::All)
}

/// Compiles and runs one aggregation template; returns `None` for an empty mask.
fn aggregate_on_pim(
    memory: &mut PimMemory,
    aggs: &[AggregateSpec],
    group: Option<(&PredicateExpr, SlotRange)>,
    selection: SlotRange,
    circuit: Circuit,
) -> Result<Option<Vec<AggValue>>, IsaError> {
    let rows = memory.rows_per_array();
    let mut c = Compiler::new(memory);
    let t = build_template(&mut c, aggs, group, selection, circuit, rows)?;
    let program = c.finish(selection);
    let out = run_program(memory, &program).and_then(|_| fold_template(memory, &t, aggs, circuit));
    free_template(memory, &t);
    out
}

/// Attributes the host must read per selected record.
fn host_attrs(ir: &QueryIR) -> Vec<String> {
    let mut set = BTreeSet::new();
    for a in &ir.aggregates {
        if let Some(e) = &a.expr {
            e.attrs(&mut set);
        }
    }
    set.extend(ir.group_by.iter().cloned());
    set.into_iter().collect()
}

/// Reads `mask`, then the needed attributes of each selected record, and
/// aggregates on the host.
fn host_pass(memory: &PimMemory, ir: &QueryIR, mask: SlotRange) -> Result<BTreeMap<Vec<i64>, Vec<AggState>>, IsaError> {
    let bits = read_filter_bits(memory, mask);
    let attrs = host_attrs(ir);
    let mut groups: BTreeMap<Vec<i64>, Vec<AggState>> = BTreeMap::new();
    let mut vals = vec![0i64; attrs.len()];
    for (i, _) in bits.iter().enumerate().filter(|(_, b)| **b) {
        for (v, a) in vals.iter_mut().zip(&attrs) {
            *v = memory.read_attr(i, a)?;
        }
        let value = |n: &str| vals[attrs.binary_search_by(|a| a.as_str().cmp(n)).expect("attribute read")];
        let key: Vec<i64> = ir.group_by.iter().map(|g| value(g)).collect();
        let st = groups.entry(key).or_insert_with(|| ir.aggregates.iter().map(|a| AggState::new(a.kind)).collect());
        for (s, a) in st.iter_mut().zip(&ir.aggregates) {
            s.update(agg_input(a, &value));
        }
    }
    Ok(groups)
}

fn check_query(ir: &QueryIR, memory: &PimMemory) -> Result<(), EngineError> {
    for a in ir.referenced_attrs() {
        if memory.layout().attr(&a).is_err() {
            return Err(OracleError::UnknownAttribute(a).into());
        }
    }
    Ok(())
}

/// Per-group PIM and per-record host costs, from a dry-run compile of the
/// group template against a copy of the scratch state.
fn cost_model(ir: &QueryIR, memory: &PimMemory, config: &EngineConfig) -> Result<(CostModel, usize), IsaError> {
    let layout = memory.layout();
    let rows = layout.rows_per_array;
    let mut pools = memory.pools.clone();
    let mut c = Compiler::detached(layout, &mut pools, memory.validity);
    let selection = c.output(0, 1)?;
    let claimed = c.output(0, 1)?;
    let zero_key = vec![0; ir.group_by.len()];
    let kp = key_predicate(&ir.group_by, &zero_key);
    let group = kp.as_ref().map(|k| (k, claimed));
    let t = build_template(&mut c, &ir.aggregates, group, selection, config.circuit, rows)?;
    let program = c.finish(selection);
    let pages = memory.page_count() as f64;
    let p = &config.params;
    let partial_bits: u32 = t
        .pieces
        .iter()
        .map(|pc| match pc.partial {
            Some(r) => r.len() as u32,
            None if matches!(pc.masked.kind, AggKind::Sum | AggKind::Count) => sum_width(pc.masked.width(), rows),
            None => pc.masked.width(),
        })
        .sum();
    let periph = if config.circuit == Circuit::Peripheral { (rows * t.pieces.len()) as f64 } else { 0.0 };
    let copy_bits = 2.0 * rows as f64 * program.copy_width() as f64;
    let pim_group_cost = pages
        * (p.c_pim_op * program.col_ops() as f64
            + p.c_periph_row * periph
            + p.c_bit_xfer * (partial_bits as f64 + copy_bits));
    let bits: u64 = host_attrs(ir).iter().map(|a| layout.attr(a).map(|p| p.spec.width as u64)).sum::<Result<u64, _>>()?;
    let host_record_cost = p.c_bit_xfer * (bits + 1) as f64 + p.c_host_rec;
    Ok((CostModel { pim_group_cost, host_record_cost }, program.col_ops()))
}

/// Builds the execution plan. Grouped PIM/hybrid plans sample the memory
/// (charged to its transfer counters).
pub fn plan(ir: &QueryIR, memory: &PimMemory, config: &EngineConfig) -> Result<QueryPlan, EngineError> {
    check_query(ir, memory)?;
    if !(config.sample_fraction > 0.0 && config.sample_fraction <= 1.0) {
        return Err(EngineError::BadSampleFraction(config.sample_fraction));
    }
    let (model, template_ops) = cost_model(ir, memory, config)?;
    let route = if config.mode == EngineMode::FilterOnly { Route::Host } else { Route::Pim };
    let mut plan = QueryPlan {
        mode: config.mode,
        circuit: config.circuit,
        aggregates: ir.aggregates.iter().map(AggregateSpec::label).collect(),
        routes: vec![route; ir.aggregates.len()],
        group_by: ir.group_by.clone(),
        template_ops,
        estimates: None,
        model: None,
        pim_groups: vec![],
        host_groups: vec![],
        costs: None,
    };
    if ir.group_by.is_empty() || config.mode == EngineMode::FilterOnly {
        return Ok(plan);
    }
    let est = estimate_groups(memory, &ir.group_by, config.sample_fraction, config.seed)?;
    let all: BTreeSet<Vec<i64>> = est.groups.iter().map(|g| g.key.clone()).collect();
    let pim = match config.mode {
        EngineMode::HybridGroupBy => choose_groups(&est, &model),
        _ => all.clone(),
    };
    plan.costs = Some(PlanCosts {
        chosen: cost_of(&pim, &est, &model),
        pure_pim: cost_of(&all, &est, &model),
        pure_host: cost_of(&BTreeSet::new(), &est, &model),
    });
    plan.host_groups = all.difference(&pim).cloned().collect();
    plan.pim_groups = pim.into_iter().collect();
    plan.model = Some(model);
    plan.estimates = Some(est);
    Ok(plan)
}

/// Executes `plan`; the returned counters cover this call only and carry
/// the host-baseline bits of the same query.
pub fn execute(ir: &QueryIR, plan: &QueryPlan, memory: &mut PimMemory) -> Result<(ResultTable, TransferStats), EngineError> {
    check_query(ir, memory)?;
    let before = memory.stats();
    let table = execute_inner(ir, plan, memory)?;
    let mut stats = memory.stats().since(&before);
    stats.host_baseline_bits = oracle::baseline_bits(ir, &memory.layout().schema, memory.record_count())?;
    Ok((table, stats))
}

fn execute_inner(ir: &QueryIR, plan: &QueryPlan, memory: &mut PimMemory) -> Result<ResultTable, EngineError> {
    let mut c = Compiler::new(memory);
    let selection = c.predicate(ir.predicate.as_ref())?;
    let grouped = !ir.group_by.is_empty() && plan.mode != EngineMode::FilterOnly;
    let claimed = if grouped { Some(c.zero_col()?) } else { None };
    let setup = c.finish(selection);
    let mut owned = vec![selection];
    owned.extend(claimed);
    let out = run_program(memory, &setup).map_err(EngineError::from).and_then(|_| {
        if plan.mode == EngineMode::FilterOnly {
            return Ok(oracle::build_table(ir, host_pass(memory, ir, selection)?));
        }
        if !grouped {
            let values = aggregate_on_pim(memory, &ir.aggregates, None, selection, plan.circuit)?;
            let values = values.unwrap_or_else(|| {
                ir.aggregates.iter().map(|a| AggState::new(a.kind).finish()).collect()
            });
            let mut t = oracle::build_table(ir, BTreeMap::new());
            t.rows = vec![ResultRow { key: vec![], values }];
            return Ok(t);
        }
        let claimed = claimed.expect("grouped");
        let mut rows: BTreeMap<Vec<i64>, Vec<AggValue>> = BTreeMap::new();
        for key in &plan.pim_groups {
            let kp = key_predicate(&ir.group_by, key).expect("non-empty group key");
            if let Some(v) = aggregate_on_pim(memory, &ir.aggregates, Some((&kp, claimed)), selection, plan.circuit)? {
                rows.insert(key.clone(), v);
            }
        }
        let mut c = Compiler::new(memory);
        let rest = c.and_not(selection, claimed)?;
        let program = c.finish(rest);
        let host = run_program(memory, &program).and_then(|_| host_pass(memory, ir, rest));
        let _ = isa::release(memory, rest);
        for (key, st) in host? {
            rows.insert(key, st.iter().map(AggState::finish).collect());
        }
        let mut t = oracle::build_table(ir, BTreeMap::new());
        t.rows = rows.into_iter().map(|(key, values)| ResultRow { key, values }).collect();
        Ok(t)
    });
    for r in owned {
        let _ = isa::release(memory, r);
    }
    out
}

/// Outcome of [`run`]: the plan, the result, and counters covering both
/// planning (sampling) and execution.
#[derive(Debug, Clone)]
pub struct QueryOutcome {
    pub plan: QueryPlan,
    pub table: ResultTable,
    pub stats: TransferStats,
}

/// Plans and executes in one step.
pub fn run(ir: &QueryIR, memory: &mut PimMemory, config: &EngineConfig) -> Result<QueryOutcome, EngineError> {
    let before = memory.stats();
    let plan = plan(ir, memory, config)?;
    let (table, exec_stats) = execute(ir, &plan, memory)?;
    let mut stats = memory.stats().since(&before);
    stats.host_baseline_bits = exec_stats.host_baseline_bits;
    Ok(QueryOutcome { plan, table, stats })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn est(values: &[f64]) -> GroupEstimates {
        GroupEstimates {
            sample_fraction: 1.0,
            groups: values.iter().enumerate().map(|(i, &e)| GroupEstimate { key: vec![i as i64], sampled: 0, estimate: e }).collect(),
            unseen_mass_flag: false,
        }
    }

    #[test]
    fn ties_go_to_host() {
        let m = CostModel { pim_group_cost: 100.0, host_record_cost: 10.0 };
        assert!(choose_groups(&est(&[10.0]), &m).is_empty());
        assert_eq!(choose_groups(&est(&[10.5, 3.0]), &m).len(), 1);
    }

    #[test]
    fn big_group_to_pim_small_to_host() {
        let mut sizes = vec![1e6];
        sizes.extend(std::iter::repeat(1.0).take(10_000));
        let m = CostModel { pim_group_cost: 5e5, host_record_cost: 4.0 * 33.0 + 16.0 };
        let pim = choose_groups(&est(&sizes), &m);
        assert_eq!(pim.into_iter().collect::<Vec<_>>(), vec![vec![0]]);
    }
}

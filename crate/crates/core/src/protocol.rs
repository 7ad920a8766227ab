//! The collaboration protocol: workers reduce their private blocks to
//! intermediate representations, the master aligns them through the
//! anchor dataset, trains the central model, and hands anchor
//! pseudo-labels back for local distillation.
//!
//! The protocol is simulated in-process but structured as explicit
//! message values: a [`WorkerUpload`] is the only thing that crosses the
//! worker/master boundary, and its type has no field that could carry a
//! raw data block. Every upload matrix is the image of a strict
//! dimensionality reduction fitted locally.

use std::collections::BTreeMap;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::anchor::{build_anchor, AnchorInputs, AnchorSpec};
use crate::datasets::{LabeledDataset, PartitionPlan};
use crate::error::{Error, Result};
use crate::linalg::{apply_pca, fit_pca, full_svd, lstsq};
use crate::matrix::DataMatrix;
use crate::metrics::accuracy;
use crate::models::{
    ridge_fit, tree_fit_with_degenerate_warning, DecisionTree, RidgeClassifier,
};

// ---------------------------------------------------------------------------
// Message and role types
// ---------------------------------------------------------------------------

/// Per-party reduced dimensionality: a fixed integer, or the string
/// `"cols-minus-one"` for one less than the party's column count.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReductionDim {
    /// The same intermediate dimension for every party.
    Fixed(usize),
    /// One less than the party's column count (maximal strict reduction).
    ColsMinusOne,
}

impl ReductionDim {
    pub fn resolve(&self, party_cols: usize) -> usize {
        match self {
            ReductionDim::Fixed(v) => *v,
            ReductionDim::ColsMinusOne => party_cols.saturating_sub(1),
        }
    }
}

impl Serialize for ReductionDim {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            ReductionDim::Fixed(v) => serializer.serialize_u64(*v as u64),
            ReductionDim::ColsMinusOne => serializer.serialize_str("cols-minus-one"),
        }
    }
}

impl<'de> Deserialize<'de> for ReductionDim {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        struct Visitor;
        impl serde::de::Visitor<'_> for Visitor {
            type Value = ReductionDim;

            fn expecting(&self, f: &mut std::fmt::Formatter) -> std::fmt::Result {
                f.write_str("a positive integer or the string \"cols-minus-one\"")
            }

            fn visit_u64<E: serde::de::Error>(self, v: u64) -> std::result::Result<Self::Value, E> {
                Ok(ReductionDim::Fixed(v as usize))
            }

            fn visit_i64<E: serde::de::Error>(self, v: i64) -> std::result::Result<Self::Value, E> {
                if v < 0 {
                    return Err(E::custom("intermediate dimension cannot be negative"));
                }
                Ok(ReductionDim::Fixed(v as usize))
            }

            fn visit_str<E: serde::de::Error>(self, v: &str) -> std::result::Result<Self::Value, E> {
                if v == "cols-minus-one" {
                    Ok(ReductionDim::ColsMinusOne)
                } else {
                    Err(E::custom(format!(
                        "unknown reduction dim '{v}' (expected an integer or \"cols-minus-one\")"
                    )))
                }
            }
        }
        deserializer.deserialize_any(Visitor)
    }
}

/// Private state of worker `(i, j)`: its raw block never leaves this
/// struct.
#[derive(Debug, Clone)]
pub struct WorkerState {
    pub row_party: usize,
    pub col_party: usize,
    pub block: DataMatrix,
    /// Ground-truth labels of row party `i`; carried by one worker per
    /// row party.
    pub labels: Option<Vec<usize>>,
    /// Intermediate dimension to reduce to.
    pub reduced_dim: usize,
}

/// What a worker shares with the master: reduced representations of its
/// block and of the anchor block, plus (once per row party) the labels.
///
/// Canonical wire encoding (all integers and floats little-endian):
/// `row_party: u64, col_party: u64,
///  intermediate: rows u64, cols u64, rows*cols f64,
///  anchor_intermediate: rows u64, cols u64, rows*cols f64,
///  labels: count u64 (0 = absent), count u64 values`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkerUpload {
    pub row_party: usize,
    pub col_party: usize,
    pub intermediate: DataMatrix,
    pub anchor_intermediate: DataMatrix,
    pub labels: Option<Vec<usize>>,
}

impl WorkerUpload {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(&(self.row_party as u64).to_le_bytes());
        out.extend_from_slice(&(self.col_party as u64).to_le_bytes());
        for m in [&self.intermediate, &self.anchor_intermediate] {
            out.extend_from_slice(&(m.rows() as u64).to_le_bytes());
            out.extend_from_slice(&(m.cols() as u64).to_le_bytes());
            for v in m.values() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        match &self.labels {
            None => out.extend_from_slice(&0u64.to_le_bytes()),
            Some(labels) => {
                out.extend_from_slice(&(labels.len() as u64).to_le_bytes());
                for &l in labels {
                    out.extend_from_slice(&(l as u64).to_le_bytes());
                }
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut cursor = 0usize;
        let mut take_u64 = |bytes: &[u8]| -> Result<u64> {
            let end = cursor + 8;
            let slice = bytes
                .get(cursor..end)
                .ok_or_else(|| Error::Decode("upload truncated".into()))?;
            cursor = end;
            Ok(u64::from_le_bytes(slice.try_into().unwrap()))
        };
        let row_party = take_u64(bytes)? as usize;
        let col_party = take_u64(bytes)? as usize;
        let take_matrix = |bytes: &[u8], cursor: &mut usize| -> Result<DataMatrix> {
            let rows = read_u64(bytes, cursor)? as usize;
            let cols = read_u64(bytes, cursor)? as usize;
            let count = rows
                .checked_mul(cols)
                .ok_or_else(|| Error::Decode("matrix size overflow".into()))?;
            let mut values = Vec::with_capacity(count);
            for _ in 0..count {
                values.push(f64::from_le_bytes(
                    bytes
                        .get(*cursor..*cursor + 8)
                        .ok_or_else(|| Error::Decode("upload truncated".into()))?
                        .try_into()
                        .unwrap(),
                ));
                *cursor += 8;
            }
            DataMatrix::from_vec(rows, cols, values)
        };
        let intermediate = take_matrix(bytes, &mut cursor)?;
        let anchor_intermediate = take_matrix(bytes, &mut cursor)?;
        let label_count = read_u64(bytes, &mut cursor)? as usize;
        let labels = if label_count == 0 {
            None
        } else {
            let mut labels = Vec::with_capacity(label_count);
            for _ in 0..label_count {
                labels.push(read_u64(bytes, &mut cursor)? as usize);
            }
            Some(labels)
        };
        if cursor != bytes.len() {
            return Err(Error::Decode(format!(
                "{} trailing bytes after upload",
                bytes.len() - cursor
            )));
        }
        Ok(Self {
            row_party,
            col_party,
            intermediate,
            anchor_intermediate,
            labels,
        })
    }
}

fn read_u64(bytes: &[u8], cursor: &mut usize) -> Result<u64> {
    let end = *cursor + 8;
    let slice = bytes
        .get(*cursor..end)
        .ok_or_else(|| Error::Decode("upload truncated".into()))?;
    *cursor = end;
    Ok(u64::from_le_bytes(slice.try_into().unwrap()))
}

/// Master-side assembled state for one row party.
#[derive(Debug, Clone)]
pub struct RowPartyState {
    pub row_party: usize,
    /// Concatenated intermediate representation, `n_i x m~_i`.
    pub intermediate: DataMatrix,
    /// Concatenated anchor intermediate, `r x m~_i`.
    pub anchor_intermediate: DataMatrix,
    pub labels: Vec<usize>,
    /// Mapping into the collaboration space, `m~_i x m^`.
    pub map: DataMatrix,
}

/// Master state after fitting the collaboration maps.
#[derive(Debug, Clone)]
pub struct MasterState {
    pub parties: Vec<RowPartyState>,
    /// Common target representation of the anchors, `r x m^`.
    pub target: DataMatrix,
    pub model: Option<RidgeClassifier>,
}

/// Anchor pseudo-labels returned to each row party.
///
/// Canonical wire encoding (little-endian): `party_count: u64`, then per
/// party `count: u64` followed by `count` u64 label values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PseudoLabelBundle {
    /// `labels[i]` holds row party i's pseudo-labels for all r anchors.
    pub labels: Vec<Vec<usize>>,
}

impl PseudoLabelBundle {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(&(self.labels.len() as u64).to_le_bytes());
        for party in &self.labels {
            out.extend_from_slice(&(party.len() as u64).to_le_bytes());
            for &l in party {
                out.extend_from_slice(&(l as u64).to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut cursor = 0usize;
        let parties = read_u64(bytes, &mut cursor)? as usize;
        let mut labels = Vec::with_capacity(parties);
        for _ in 0..parties {
            let count = read_u64(bytes, &mut cursor)? as usize;
            let mut party = Vec::with_capacity(count);
            for _ in 0..count {
                party.push(read_u64(bytes, &mut cursor)? as usize);
            }
            labels.push(party);
        }
        if cursor != bytes.len() {
            return Err(Error::Decode(format!(
                "{} trailing bytes after label bundle",
                bytes.len() - cursor
            )));
        }
        Ok(Self { labels })
    }
}

// ---------------------------------------------------------------------------
// Protocol operations
// ---------------------------------------------------------------------------

/// Worker side: fit the reduction map once on the private block and
/// apply the same fitted map to both the block and the anchor block.
pub fn worker_prepare(state: &WorkerState, anchor_block: &DataMatrix) -> Result<WorkerUpload> {
    if anchor_block.cols() != state.block.cols() {
        return Err(Error::ShapeMismatch(format!(
            "anchor block has {} columns, party block has {}",
            anchor_block.cols(),
            state.block.cols()
        )));
    }
    let map = fit_pca(&state.block, state.reduced_dim)?;
    let intermediate = apply_pca(&map, &state.block)?;
    let anchor_intermediate = apply_pca(&map, anchor_block)?;
    Ok(WorkerUpload {
        row_party: state.row_party,
        col_party: state.col_party,
        intermediate,
        anchor_intermediate,
        labels: state.labels.clone(),
    })
}

/// Master side: assemble per-row-party representations and fit the
/// collaboration maps G_i against a shared target.
///
/// The target is the best rank-`target_dim` representation of the
/// horizontally concatenated anchor intermediates (left singular vectors
/// scaled by singular values); each G_i is the least-squares map from
/// the party's anchor intermediate onto that target. Assembly is keyed
/// by party indices, so upload order is irrelevant.
pub fn master_fit_maps(uploads: &[WorkerUpload], target_dim: Option<usize>) -> Result<MasterState> {
    if uploads.is_empty() {
        return Err(Error::InvalidParam("no worker uploads".into()));
    }
    let mut sorted: Vec<&WorkerUpload> = uploads.iter().collect();
    sorted.sort_by_key(|u| (u.row_party, u.col_party));

    // Group by row party and validate the grid.
    let mut groups: BTreeMap<usize, Vec<&WorkerUpload>> = BTreeMap::new();
    for u in &sorted {
        groups.entry(u.row_party).or_default().push(u);
    }
    let row_ids: Vec<usize> = groups.keys().copied().collect();
    if row_ids != (0..row_ids.len()).collect::<Vec<_>>() {
        return Err(Error::InvalidParam(format!(
            "row parties must be contiguous from 0, got {row_ids:?}"
        )));
    }
    let col_ids: Vec<usize> = groups[&0].iter().map(|u| u.col_party).collect();
    let mut anchor_rows = None;
    let mut parties = Vec::new();
    for (&i, group) in &groups {
        let ids: Vec<usize> = group.iter().map(|u| u.col_party).collect();
        if ids != col_ids {
            return Err(Error::InvalidParam(format!(
                "row party {i} has column parties {ids:?}, expected {col_ids:?}"
            )));
        }
        let n_i = group[0].intermediate.rows();
        let mut labels: Option<Vec<usize>> = None;
        for u in group {
            if u.intermediate.rows() != n_i {
                return Err(Error::ShapeMismatch(format!(
                    "row party {i}: intermediate row counts differ"
                )));
            }
            if u.anchor_intermediate.cols() != u.intermediate.cols() {
                return Err(Error::ShapeMismatch(format!(
                    "row party {i}: anchor and data intermediates disagree on width"
                )));
            }
            match (anchor_rows, u.anchor_intermediate.rows()) {
                (None, r) => anchor_rows = Some(r),
                (Some(r0), r) if r0 != r => {
                    return Err(Error::ShapeMismatch(format!(
                        "anchor count mismatch: {r0} vs {r}"
                    )));
                }
                _ => {}
            }
            if let Some(l) = &u.labels {
                match &labels {
                    None => labels = Some(l.clone()),
                    Some(existing) if existing != l => {
                        return Err(Error::InvalidParam(format!(
                            "row party {i}: conflicting label uploads"
                        )));
                    }
                    _ => {}
                }
            }
        }
        let labels = labels.ok_or_else(|| {
            Error::InvalidParam(format!("row party {i} uploaded no labels"))
        })?;
        if labels.len() != n_i {
            return Err(Error::ShapeMismatch(format!(
                "row party {i}: {} labels for {} rows",
                labels.len(),
                n_i
            )));
        }
        let intermediates: Vec<&DataMatrix> = group.iter().map(|u| &u.intermediate).collect();
        let anchors: Vec<&DataMatrix> =
            group.iter().map(|u| &u.anchor_intermediate).collect();
        parties.push(RowPartyState {
            row_party: i,
            intermediate: DataMatrix::hstack(&intermediates)?,
            anchor_intermediate: DataMatrix::hstack(&anchors)?,
            labels,
            map: DataMatrix::zeros(0, 0),
        });
    }

    let min_width = parties
        .iter()
        .map(|p| p.anchor_intermediate.cols())
        .min()
        .unwrap();
    // The target cannot be wider than any party's representation, nor
    // than the anchor count (the SVD has at most r left vectors).
    let cap = min_width.min(anchor_rows.unwrap_or(0));
    let m_hat = target_dim.unwrap_or(min_width);
    if m_hat == 0 || m_hat > cap {
        return Err(Error::InvalidParam(format!(
            "target dimension {m_hat} must be in 1..={cap}"
        )));
    }

    let concat: Vec<&DataMatrix> = parties.iter().map(|p| &p.anchor_intermediate).collect();
    let stacked = DataMatrix::hstack(&concat)?;
    let svd = full_svd(&stacked)?;
    let r = stacked.rows();
    let mut target = DataMatrix::zeros(r, m_hat);
    for i in 0..r {
        for j in 0..m_hat {
            target.set(i, j, svd.u.get(i, j) * svd.singular_values[j]);
        }
    }
    for party in &mut parties {
        party.map = lstsq(&party.anchor_intermediate, &target)?;
    }
    Ok(MasterState {
        parties,
        target,
        model: None,
    })
}

/// Master side: stack the collaboration representations and train the
/// central ridge classifier against the pooled labels.
pub fn master_train(state: &mut MasterState, class_count: usize, lambda: f64) -> Result<()> {
    let mut mapped = Vec::new();
    let mut labels = Vec::new();
    for party in &state.parties {
        mapped.push(party.intermediate.matmul(&party.map)?);
        labels.extend_from_slice(&party.labels);
    }
    let refs: Vec<&DataMatrix> = mapped.iter().collect();
    let pooled = DataMatrix::vstack(&refs)?;
    state.model = Some(ridge_fit(&pooled, &labels, class_count, lambda)?);
    Ok(())
}

/// Master side: pseudo-label the anchors for every row party with the
/// trained central model.
pub fn master_label_anchors(state: &MasterState) -> Result<PseudoLabelBundle> {
    let model = state
        .model
        .as_ref()
        .ok_or_else(|| Error::InvalidParam("central model not trained".into()))?;
    let mut labels = Vec::new();
    for party in &state.parties {
        let mapped = party.anchor_intermediate.matmul(&party.map)?;
        labels.push(model.predict(&mapped)?);
    }
    Ok(PseudoLabelBundle { labels })
}

/// Worker side: distill an interpretable tree from the full-width anchor
/// data and the returned pseudo-labels.
pub fn worker_distill(
    x_anchor: &DataMatrix,
    y_anchor: &[usize],
    class_count: usize,
    max_splits: usize,
) -> Result<DecisionTree> {
    if x_anchor.rows() != y_anchor.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} anchors but {} pseudo-labels",
            x_anchor.rows(),
            y_anchor.len()
        )));
    }
    tree_fit_with_degenerate_warning(x_anchor, y_anchor, class_count, max_splits)
}

// ---------------------------------------------------------------------------
// End-to-end pipeline
// ---------------------------------------------------------------------------

/// Tuning knobs for one pipeline run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineParams {
    pub reduction: ReductionDim,
    /// Collaboration dimension m^; `None` uses the smallest per-party
    /// concatenated width.
    pub target_dim: Option<usize>,
    pub ridge_lambda: f64,
    pub tree_max_splits: usize,
}

/// Diagnostics reported (not asserted) by a pipeline run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineDiagnostics {
    /// Pairwise relative disagreement of mapped anchors,
    /// `||A_i G_i - A_i' G_i'||_F / ||Z||_F`.
    pub anchor_disagreement: Vec<((usize, usize), f64)>,
    /// Mean pairwise agreement of per-party pseudo-labels (1.0 when c = 1).
    pub pseudo_label_agreement: f64,
    /// Wall-clock per stage, milliseconds. Informational; excluded from
    /// anything that must be byte-reproducible.
    pub stage_millis: Vec<(String, f64)>,
}

/// Result of a full pipeline run: one distilled model per row party plus
/// the anchors they were trained on.
#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub anchor: DataMatrix,
    pub distilled: Vec<DecisionTree>,
    pub diagnostics: PipelineDiagnostics,
}

/// Execute the whole protocol over simulated parties.
///
/// No worker ever reads another worker's block: blocks are sliced from
/// the training matrix here, handed to their own `WorkerState`, and only
/// `WorkerUpload` values reach the master. Errors carry the protocol
/// step number they occurred in.
pub fn run_dc_pipeline(
    train: &LabeledDataset,
    plan: &PartitionPlan,
    anchor_spec: &AnchorSpec,
    x_public: &DataMatrix,
    params: &PipelineParams,
) -> Result<PipelineOutput> {
    let mut stage_millis = Vec::new();
    let clock = Instant::now();

    // Step 1: every worker generates the same anchors from the shared
    // seed; simulated as one construction.
    let inputs = AnchorInputs {
        x_train: &train.x,
        plan,
        x_public,
    };
    let anchor = build_anchor(anchor_spec, &inputs).map_err(|e| e.at_step(1))?;
    stage_millis.push(("anchor".to_string(), ms(&clock)));

    // Steps 2-4: per-worker reduction and upload.
    let clock = Instant::now();
    let mut uploads = Vec::new();
    for i in 0..plan.row_parties() {
        let labels = plan.labels_for_row_group(&train.y, i);
        for j in 0..plan.col_parties() {
            let block = plan.block(&train.x, i, j).map_err(|e| e.at_step(3))?;
            let reduced_dim = params.reduction.resolve(block.cols());
            let state = WorkerState {
                row_party: i,
                col_party: j,
                block,
                labels: (j == 0).then(|| labels.clone()),
                reduced_dim,
            };
            let anchor_block = anchor
                .select_cols(&plan.col_groups[j])
                .map_err(|e| e.at_step(3))?;
            uploads.push(worker_prepare(&state, &anchor_block).map_err(|e| e.at_step(3))?);
        }
    }
    stage_millis.push(("worker_prepare".to_string(), ms(&clock)));

    // Steps 5-7: master assembles and fits the collaboration maps.
    let clock = Instant::now();
    let mut master =
        master_fit_maps(&uploads, params.target_dim).map_err(|e| e.at_step(7))?;
    stage_millis.push(("master_fit_maps".to_string(), ms(&clock)));

    // Steps 8-9: central model on the pooled collaboration representation.
    let clock = Instant::now();
    master_train(&mut master, train.class_count, params.ridge_lambda)
        .map_err(|e| e.at_step(9))?;
    stage_millis.push(("master_train".to_string(), ms(&clock)));

    // Step 11: pseudo-labels back to the workers.
    let clock = Instant::now();
    let bundle = master_label_anchors(&master).map_err(|e| e.at_step(11))?;
    stage_millis.push(("master_label_anchors".to_string(), ms(&clock)));

    // Step 13: per-row-party distillation on the full-width anchors.
    let clock = Instant::now();
    let mut distilled = Vec::new();
    for labels in &bundle.labels {
        distilled.push(
            worker_distill(&anchor, labels, train.class_count, params.tree_max_splits)
                .map_err(|e| e.at_step(13))?,
        );
    }
    stage_millis.push(("worker_distill".to_string(), ms(&clock)));

    // Diagnostics.
    let z_norm = master.target.frobenius_norm().max(f64::MIN_POSITIVE);
    let mut anchor_disagreement = Vec::new();
    let mapped: Vec<DataMatrix> = master
        .parties
        .iter()
        .map(|p| p.anchor_intermediate.matmul(&p.map))
        .collect::<Result<_>>()?;
    for i in 0..mapped.len() {
        for j in (i + 1)..mapped.len() {
            let d = mapped[i].sub(&mapped[j])?.frobenius_norm() / z_norm;
            anchor_disagreement.push(((i, j), d));
        }
    }
    let pseudo_label_agreement = if bundle.labels.len() < 2 {
        1.0
    } else {
        let mut total = 0.0;
        let mut pairs = 0.0;
        for i in 0..bundle.labels.len() {
            for j in (i + 1)..bundle.labels.len() {
                total += accuracy(&bundle.labels[i], &bundle.labels[j])?;
                pairs += 1.0;
            }
        }
        total / pairs
    };

    Ok(PipelineOutput {
        anchor,
        distilled,
        diagnostics: PipelineDiagnostics {
            anchor_disagreement,
            pseudo_label_agreement,
            stage_millis,
        },
    })
}

fn ms(clock: &Instant) -> f64 {
    clock.elapsed().as_secs_f64() * 1e3
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::anchor::AnchorMethod;
    use crate::datasets::{generate_artificial, make_partition, ColScheme, RowScheme};
    use crate::models::tree_fit;

    fn artificial_setup(
        seed: u64,
    ) -> (LabeledDataset, LabeledDataset, DataMatrix, PartitionPlan) {
        let (train, test, public) = generate_artificial(1000, 1000, 100, seed).unwrap();
        let plan = make_partition(
            1000,
            20,
            2,
            2,
            RowScheme::RandomEqual,
            &ColScheme::RoundRobin,
            seed,
        )
        .unwrap();
        (train, test, public, plan)
    }

    fn default_params() -> PipelineParams {
        PipelineParams {
            reduction: ReductionDim::Fixed(5),
            target_dim: None,
            ridge_lambda: 1.0,
            tree_max_splits: 5,
        }
    }

    #[test]
    fn worker_prepare_upload_shapes() {
        let (train, _, _, plan) = artificial_setup(3);
        let block = plan.block(&train.x, 0, 0).unwrap();
        let state = WorkerState {
            row_party: 0,
            col_party: 0,
            block,
            labels: Some(plan.labels_for_row_group(&train.y, 0)),
            reduced_dim: 5,
        };
        let anchor = crate::anchor::raw_anchor(&train.x, 1000, 9).unwrap();
        let anchor_block = anchor.select_cols(&plan.col_groups[0]).unwrap();
        let upload = worker_prepare(&state, &anchor_block).unwrap();
        assert_eq!((upload.intermediate.rows(), upload.intermediate.cols()), (500, 5));
        assert_eq!(
            (upload.anchor_intermediate.rows(), upload.anchor_intermediate.cols()),
            (1000, 5)
        );
        // Strict reduction: uploads are narrower than the raw block.
        assert!(upload.intermediate.cols() < plan.col_groups[0].len());
    }

    #[test]
    fn worker_prepare_identical_inputs_identical_uploads() {
        let (train, _, _, plan) = artificial_setup(5);
        let block = plan.block(&train.x, 1, 1).unwrap();
        let mk = || WorkerState {
            row_party: 1,
            col_party: 1,
            block: block.clone(),
            labels: None,
            reduced_dim: 4,
        };
        let anchor_block = plan
            .block(&train.x, 0, 1)
            .unwrap();
        let a = worker_prepare(&mk(), &anchor_block).unwrap();
        let b = worker_prepare(&mk(), &anchor_block).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn worker_prepare_anchor_equal_to_block_coincides() {
        let (train, _, _, plan) = artificial_setup(7);
        let block = plan.block(&train.x, 0, 0).unwrap();
        let state = WorkerState {
            row_party: 0,
            col_party: 0,
            block: block.clone(),
            labels: None,
            reduced_dim: 3,
        };
        let upload = worker_prepare(&state, &block).unwrap();
        assert_eq!(upload.intermediate, upload.anchor_intermediate);
    }

    #[test]
    fn upload_round_trips_through_canonical_bytes() {
        let (train, _, _, plan) = artificial_setup(11);
        let block = plan.block(&train.x, 0, 1).unwrap();
        let state = WorkerState {
            row_party: 0,
            col_party: 1,
            block,
            labels: Some(plan.labels_for_row_group(&train.y, 0)),
            reduced_dim: 2,
        };
        let anchor = crate::anchor::raw_anchor(&train.x, 40, 1).unwrap();
        let anchor_block = anchor.select_cols(&plan.col_groups[1]).unwrap();
        let upload = worker_prepare(&state, &anchor_block).unwrap();
        let bytes = upload.to_bytes();
        let back = WorkerUpload::from_bytes(&bytes).unwrap();
        assert_eq!(upload, back);
        assert!(WorkerUpload::from_bytes(&bytes[..bytes.len() - 3]).is_err());
    }

    #[test]
    fn label_bundle_round_trips_through_canonical_bytes() {
        let bundle = PseudoLabelBundle {
            labels: vec![vec![0, 2, 1], vec![1, 1, 0]],
        };
        let bytes = bundle.to_bytes();
        assert_eq!(bytes.len(), 8 + 2 * 8 + 6 * 8);
        assert_eq!(PseudoLabelBundle::from_bytes(&bytes).unwrap(), bundle);
        assert!(PseudoLabelBundle::from_bytes(&bytes[..bytes.len() - 1]).is_err());
    }

    #[test]
    fn upload_golden_bytes_layout() {
        let upload = WorkerUpload {
            row_party: 1,
            col_party: 2,
            intermediate: DataMatrix::from_rows(&[vec![1.5]]).unwrap(),
            anchor_intermediate: DataMatrix::from_rows(&[vec![-2.0]]).unwrap(),
            labels: Some(vec![3]),
        };
        let mut want: Vec<u8> = Vec::new();
        want.extend_from_slice(&1u64.to_le_bytes());
        want.extend_from_slice(&2u64.to_le_bytes());
        want.extend_from_slice(&1u64.to_le_bytes());
        want.extend_from_slice(&1u64.to_le_bytes());
        want.extend_from_slice(&1.5f64.to_le_bytes());
        want.extend_from_slice(&1u64.to_le_bytes());
        want.extend_from_slice(&1u64.to_le_bytes());
        want.extend_from_slice(&(-2.0f64).to_le_bytes());
        want.extend_from_slice(&1u64.to_le_bytes());
        want.extend_from_slice(&3u64.to_le_bytes());
        assert_eq!(upload.to_bytes(), want);
    }

    #[test]
    fn master_single_party_reproduces_target() {
        let (train, _, public, _) = artificial_setup(13);
        let plan = make_partition(
            1000,
            20,
            1,
            1,
            RowScheme::Contiguous,
            &ColScheme::RoundRobin,
            0,
        )
        .unwrap();
        let _ = public;
        let block = plan.block(&train.x, 0, 0).unwrap();
        let state = WorkerState {
            row_party: 0,
            col_party: 0,
            block,
            labels: Some(train.y.clone()),
            reduced_dim: 10,
        };
        let anchor = crate::anchor::raw_anchor(&train.x, 500, 3).unwrap();
        let upload = worker_prepare(&state, &anchor).unwrap();
        let master = master_fit_maps(&[upload], Some(8)).unwrap();
        let mapped = master.parties[0]
            .anchor_intermediate
            .matmul(&master.parties[0].map)
            .unwrap();
        let residual = mapped.sub(&master.target).unwrap().frobenius_norm();
        assert!(residual <= 1e-8, "single-party residual {residual}");
    }

    #[test]
    fn master_orthogonal_twin_parties_agree() {
        // Party 2's intermediates equal party 1's times an orthogonal Q:
        // the mapped anchors must coincide up to 1e-6 relative error.
        let (train, _, _, _) = artificial_setup(17);
        let plan = make_partition(
            1000,
            20,
            1,
            1,
            RowScheme::Contiguous,
            &ColScheme::RoundRobin,
            0,
        )
        .unwrap();
        let block = plan.block(&train.x, 0, 0).unwrap();
        let anchor = crate::anchor::raw_anchor(&train.x, 300, 5).unwrap();
        let state = WorkerState {
            row_party: 0,
            col_party: 0,
            block,
            labels: Some(train.y.clone()),
            reduced_dim: 6,
        };
        let base = worker_prepare(&state, &anchor).unwrap();

        // A deterministic 6x6 rotation built from a fixed skew matrix.
        let theta: f64 = 0.4;
        let mut q = DataMatrix::identity(6);
        for (a, b) in [(0usize, 1usize), (2, 3), (4, 5)] {
            let mut rot = DataMatrix::identity(6);
            rot.set(a, a, theta.cos());
            rot.set(a, b, -theta.sin());
            rot.set(b, a, theta.sin());
            rot.set(b, b, theta.cos());
            q = q.matmul(&rot).unwrap();
        }
        let twin = WorkerUpload {
            row_party: 1,
            col_party: 0,
            intermediate: base.intermediate.matmul(&q).unwrap(),
            anchor_intermediate: base.anchor_intermediate.matmul(&q).unwrap(),
            labels: base.labels.clone(),
        };
        let master = master_fit_maps(&[base, twin], Some(6)).unwrap();
        let m0 = master.parties[0]
            .anchor_intermediate
            .matmul(&master.parties[0].map)
            .unwrap();
        let m1 = master.parties[1]
            .anchor_intermediate
            .matmul(&master.parties[1].map)
            .unwrap();
        let rel = m0.sub(&m1).unwrap().frobenius_norm() / master.target.frobenius_norm();
        assert!(rel <= 1e-6, "orthogonal twins disagree: {rel}");
    }

    #[test]
    fn master_rejects_bad_grids() {
        let upload = WorkerUpload {
            row_party: 1, // missing row party 0
            col_party: 0,
            intermediate: DataMatrix::zeros(4, 2),
            anchor_intermediate: DataMatrix::zeros(5, 2),
            labels: Some(vec![0; 4]),
        };
        assert!(master_fit_maps(&[upload], None).is_err());
    }

    #[test]
    fn master_caps_target_dim_by_anchor_count() {
        // Three anchors cannot support a five-dimensional target.
        let (train, _, _, _) = artificial_setup(47);
        let plan = make_partition(
            1000,
            20,
            1,
            1,
            RowScheme::Contiguous,
            &ColScheme::RoundRobin,
            0,
        )
        .unwrap();
        let state = WorkerState {
            row_party: 0,
            col_party: 0,
            block: plan.block(&train.x, 0, 0).unwrap(),
            labels: Some(train.y.clone()),
            reduced_dim: 5,
        };
        let anchor = crate::anchor::raw_anchor(&train.x, 3, 1).unwrap();
        let upload = worker_prepare(&state, &anchor).unwrap();
        assert!(master_fit_maps(&[upload.clone()], Some(5)).is_err());
        assert!(master_fit_maps(&[upload], Some(3)).is_ok());
    }

    #[test]
    fn master_train_and_label_anchors_consistent() {
        let (train, _, public, plan) = artificial_setup(19);
        let spec = AnchorSpec {
            method: AnchorMethod::Raw,
            r: 1000,
            seed: 7,
        };
        let inputs = AnchorInputs {
            x_train: &train.x,
            plan: &plan,
            x_public: &public,
        };
        let anchor = build_anchor(&spec, &inputs).unwrap();
        let mut uploads = Vec::new();
        for i in 0..2 {
            for j in 0..2 {
                let state = WorkerState {
                    row_party: i,
                    col_party: j,
                    block: plan.block(&train.x, i, j).unwrap(),
                    labels: (j == 0).then(|| plan.labels_for_row_group(&train.y, i)),
                    reduced_dim: 5,
                };
                let anchor_block = anchor.select_cols(&plan.col_groups[j]).unwrap();
                uploads.push(worker_prepare(&state, &anchor_block).unwrap());
            }
        }
        let mut master = master_fit_maps(&uploads, None).unwrap();
        master_train(&mut master, 2, 1.0).unwrap();
        let bundle = master_label_anchors(&master).unwrap();
        assert_eq!(bundle.labels.len(), 2);
        assert_eq!(bundle.labels[0].len(), 1000);
        // Two row parties looking at the same anchors mostly agree.
        let agreement = accuracy(&bundle.labels[0], &bundle.labels[1]).unwrap();
        assert!(agreement >= 0.75, "pseudo-label agreement {agreement}");

        // Re-running is bit-identical.
        let mut master2 = master_fit_maps(&uploads, None).unwrap();
        master_train(&mut master2, 2, 1.0).unwrap();
        assert_eq!(master_label_anchors(&master2).unwrap(), bundle);
    }

    #[test]
    fn separable_collaboration_space_trains_to_high_accuracy() {
        // Two far-apart clusters, single party, raw anchors equal to the
        // training rows: with a tiny ridge penalty the central model fits
        // the training data and labels those anchors exactly like the
        // training labels.
        let mut rng = crate::rng::rng_from_seed(61);
        let n = 200;
        let mut rows = Vec::new();
        let mut y = Vec::new();
        for i in 0..n {
            let label = i % 2;
            let center = if label == 1 { 6.0 } else { -6.0 };
            rows.push(vec![
                center + crate::rng::sample_standard_normal(&mut rng),
                center + crate::rng::sample_standard_normal(&mut rng),
                crate::rng::sample_standard_normal(&mut rng),
            ]);
            y.push(label);
        }
        let x = DataMatrix::from_rows(&rows).unwrap();
        let train = LabeledDataset::new(x.clone(), y.clone(), 2).unwrap();
        let state = WorkerState {
            row_party: 0,
            col_party: 0,
            block: x.clone(),
            labels: Some(y.clone()),
            reduced_dim: 2,
        };
        let anchor = crate::anchor::raw_anchor(&train.x, n, 9).unwrap();
        let upload = worker_prepare(&state, &anchor).unwrap();
        let mut master = master_fit_maps(&[upload], None).unwrap();
        master_train(&mut master, 2, 1e-6).unwrap();

        let model = master.model.as_ref().unwrap();
        let mapped = master.parties[0]
            .intermediate
            .matmul(&master.parties[0].map)
            .unwrap();
        let train_acc = accuracy(&y, &model.predict(&mapped).unwrap()).unwrap();
        assert!(train_acc >= 0.99, "training accuracy {train_acc}");

        // Anchors are a permutation of the training rows; the perfectly
        // fit model pseudo-labels them with the permuted training labels.
        let bundle = master_label_anchors(&master).unwrap();
        for i in 0..n {
            let src = (0..n)
                .find(|&j| anchor.row(i) == train.x.row(j))
                .expect("raw anchor is a training row");
            assert_eq!(bundle.labels[0][i], y[src], "anchor {i}");
        }
    }

    #[test]
    fn identical_uploads_produce_identical_pseudo_labels() {
        let (train, _, _, _) = artificial_setup(23);
        let plan = make_partition(
            1000,
            20,
            1,
            1,
            RowScheme::Contiguous,
            &ColScheme::RoundRobin,
            0,
        )
        .unwrap();
        let block = plan.block(&train.x, 0, 0).unwrap();
        let anchor = crate::anchor::raw_anchor(&train.x, 200, 13).unwrap();
        let state = WorkerState {
            row_party: 0,
            col_party: 0,
            block,
            labels: Some(train.y.clone()),
            reduced_dim: 8,
        };
        let base = worker_prepare(&state, &anchor).unwrap();
        let mut twin = base.clone();
        twin.row_party = 1;
        let mut master = master_fit_maps(&[base, twin], None).unwrap();
        master_train(&mut master, 2, 1.0).unwrap();
        let bundle = master_label_anchors(&master).unwrap();
        assert_eq!(bundle.labels[0], bundle.labels[1]);
    }

    #[test]
    fn distill_follows_single_feature_rule() {
        let (train, _, _, _) = artificial_setup(29);
        // Pseudo-labels from a depth-1 rule on feature 2.
        let y: Vec<usize> = (0..train.x.rows())
            .map(|i| usize::from(train.x.get(i, 2) > 0.1))
            .collect();
        let tree = worker_distill(&train.x, &y, 2, 5).unwrap();
        assert_eq!(tree.top_features(1), vec![2]);

        let constant = vec![1usize; train.x.rows()];
        let tree = worker_distill(&train.x, &constant, 2, 5).unwrap();
        assert_eq!(tree.split_count(), 0);
        assert!(tree.feature_importances().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn pipeline_upload_order_is_irrelevant() {
        let (train, _, public, plan) = artificial_setup(31);
        let spec = AnchorSpec {
            method: AnchorMethod::Smote { k: 25, alpha: 1.5 },
            r: 1000,
            seed: 3,
        };
        let inputs = AnchorInputs {
            x_train: &train.x,
            plan: &plan,
            x_public: &public,
        };
        let anchor = build_anchor(&spec, &inputs).unwrap();
        let mut uploads = Vec::new();
        for i in 0..2 {
            for j in 0..2 {
                let state = WorkerState {
                    row_party: i,
                    col_party: j,
                    block: plan.block(&train.x, i, j).unwrap(),
                    labels: (j == 0).then(|| plan.labels_for_row_group(&train.y, i)),
                    reduced_dim: 5,
                };
                let anchor_block = anchor.select_cols(&plan.col_groups[j]).unwrap();
                uploads.push(worker_prepare(&state, &anchor_block).unwrap());
            }
        }
        let forward = master_fit_maps(&uploads, None).unwrap();
        uploads.reverse();
        let reversed = master_fit_maps(&uploads, None).unwrap();
        assert_eq!(forward.target, reversed.target);
        for (a, b) in forward.parties.iter().zip(&reversed.parties) {
            assert_eq!(a.map, b.map);
            assert_eq!(a.intermediate, b.intermediate);
        }
    }

    #[test]
    fn pipeline_artificial_disagreement_and_agreement_bounds() {
        let (train, _, public, plan) = artificial_setup(37);
        let spec = AnchorSpec {
            method: AnchorMethod::Smote { k: 25, alpha: 1.5 },
            r: 1000,
            seed: 11,
        };
        let out = run_dc_pipeline(&train, &plan, &spec, &public, &default_params()).unwrap();
        assert_eq!(out.distilled.len(), 2);
        // The disagreement diagnostic is reported, not bounded tightly:
        // with m^ = m~_i the target keeps party-specific noise directions
        // that the other party's map cannot reach, so a sizable fraction
        // of ||Z|| is irreducible disagreement. Sanity: finite, nonzero,
        // below 1.
        let (_, disagreement) = out.diagnostics.anchor_disagreement[0];
        assert!(
            disagreement.is_finite() && disagreement > 0.0 && disagreement < 1.0,
            "anchor disagreement {disagreement} out of sanity band"
        );
        assert!(out.diagnostics.pseudo_label_agreement >= 0.75);
    }

    #[test]
    fn pipeline_single_party_near_centralized() {
        let (train, test, public, _) = artificial_setup(41);
        let plan = make_partition(
            1000,
            20,
            1,
            1,
            RowScheme::Contiguous,
            &ColScheme::RoundRobin,
            0,
        )
        .unwrap();
        let spec = AnchorSpec {
            method: AnchorMethod::Raw,
            r: 1000,
            seed: 5,
        };
        let params = PipelineParams {
            reduction: ReductionDim::ColsMinusOne,
            target_dim: None,
            ridge_lambda: 1.0,
            tree_max_splits: 5,
        };
        let out = run_dc_pipeline(&train, &plan, &spec, &public, &params).unwrap();
        let pipeline_pred = out.distilled[0].predict(&test.x).unwrap();
        let pipeline_acc = accuracy(&test.y, &pipeline_pred).unwrap();

        let central = tree_fit(&train.x, &train.y, 2, 5).unwrap();
        let central_acc =
            accuracy(&test.y, &central.predict(&test.x).unwrap()).unwrap();
        assert!(
            pipeline_acc >= central_acc - 0.02,
            "single-party pipeline {pipeline_acc} vs centralized {central_acc}"
        );
    }

    #[test]
    fn pipeline_errors_carry_step_numbers() {
        let (train, _, public, plan) = artificial_setup(43);
        let spec = AnchorSpec {
            method: AnchorMethod::Raw,
            r: 5000, // more raw anchors than rows
            seed: 5,
        };
        let err = run_dc_pipeline(&train, &plan, &spec, &public, &default_params()).unwrap_err();
        match err {
            Error::PipelineStep { step, .. } => assert_eq!(step, 1),
            other => panic!("expected a step error, got {other}"),
        }
    }
}

//! Overlap scores, voxel-pooled average precision and completion reports.

use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::tensor::Tensor;
use crate::voxel::VoxelGrid;

pub const IOU_THRESHOLD: f64 = 0.5;

/// Intersection over union after thresholding `pred`; 1 when both are empty.
pub fn iou(pred: &VoxelGrid, truth: &VoxelGrid, threshold: f64) -> Result<f64> {
    if pred.extent() != truth.extent() {
        return Err(Error::InvalidArgument(format!(
            "iou: extents {} and {} differ",
            pred.extent(),
            truth.extent()
        )));
    }
    let (mut inter, mut union) = (0usize, 0usize);
    for (&p, &t) in pred.data().iter().zip(truth.data()) {
        let (p, t) = (p >= threshold, t >= 0.5);
        inter += (p && t) as usize;
        union += (p || t) as usize;
    }
    Ok(if union == 0 { 1.0 } else { inter as f64 / union as f64 })
}

/// Area under the precision-recall curve by rank summation: precision is
/// averaged over the ranks of positive labels. Tied scores form one rank
/// block, evaluated at the block's end.
pub fn average_precision(pairs: &[(f64, bool)]) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::InvalidArgument("average precision of an empty set".into()));
    }
    if pairs.iter().any(|(s, _)| s.is_nan()) {
        return Err(Error::InvalidArgument("average precision: NaN score".into()));
    }
    let positives = pairs.iter().filter(|(_, l)| *l).count();
    if positives == 0 {
        return Err(Error::InvalidArgument("average precision: no positive labels".into()));
    }
    let mut sorted = pairs.to_vec();
    sorted.sort_by(|a, b| b.0.total_cmp(&a.0));
    let (mut seen, mut hits, mut total) = (0usize, 0usize, 0.0);
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        while j < sorted.len() && sorted[j].0 == sorted[i].0 {
            j += 1;
        }
        let block_hits = sorted[i..j].iter().filter(|(_, l)| *l).count();
        seen += j - i;
        hits += block_hits;
        total += block_hits as f64 * hits as f64 / seen as f64;
        i = j;
    }
    Ok(total / positives as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Pooling {
    /// All voxels of the evaluation set form one ranking.
    #[default]
    Dataset,
    /// One AP per object, then the mean over objects with any positive voxel.
    PerObject,
}

pub fn average_precision_grids(preds: &[VoxelGrid], truths: &[VoxelGrid], pooling: Pooling) -> Result<f64> {
    if preds.len() != truths.len() {
        return Err(Error::InvalidArgument(format!(
            "{} predictions for {} ground truths",
            preds.len(),
            truths.len()
        )));
    }
    if preds.is_empty() {
        return Err(Error::InvalidArgument("average precision of an empty set".into()));
    }
    let pairs_of = |p: &VoxelGrid, t: &VoxelGrid| -> Result<Vec<(f64, bool)>> {
        if p.extent() != t.extent() {
            return Err(Error::InvalidArgument(format!("extents {} and {} differ", p.extent(), t.extent())));
        }
        Ok(p.data().iter().zip(t.data()).map(|(&s, &l)| (s, l >= 0.5)).collect())
    };
    match pooling {
        Pooling::Dataset => {
            let mut all = Vec::new();
            for (p, t) in preds.iter().zip(truths) {
                all.extend(pairs_of(p, t)?);
            }
            average_precision(&all)
        }
        Pooling::PerObject => {
            let mut aps = Vec::new();
            for (p, t) in preds.iter().zip(truths) {
                if t.count() > 0 {
                    aps.push(average_precision(&pairs_of(p, t)?)?);
                }
            }
            if aps.is_empty() {
                return Err(Error::InvalidArgument("average precision: no positive labels".into()));
            }
            Ok(mean_of_classes(&aps))
        }
    }
}

/// Unweighted mean.
pub fn mean_of_classes(scores: &[f64]) -> f64 {
    scores.iter().sum::<f64>() / scores.len() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassScore {
    pub class: String,
    pub ap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub sample_count: usize,
    pub threshold: f64,
    pub pooling: Pooling,
    pub per_class_ap: Vec<ClassScore>,
    pub mean_ap: f64,
    pub mean_iou: f64,
    pub iou: Vec<f64>,
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json() + "\n")?;
        Ok(())
    }

    pub fn write_iou_csv(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(f, "sample,iou")?;
        for (i, v) in self.iou.iter().enumerate() {
            writeln!(f, "{i},{v}")?;
        }
        f.flush()?;
        Ok(())
    }
}

/// Anything that turns an encoder input into a completed grid.
pub trait CompletionModel {
    fn complete(&self, condition: &Tensor) -> Result<VoxelGrid>;
}

#[derive(Debug, Clone)]
pub struct CompletionPair {
    pub condition: Tensor,
    pub target: VoxelGrid,
}

/// Per-sample IoU plus per-class AP, classes taken from the targets' tags.
pub fn evaluate_completion(model: &dyn CompletionModel, pairs: &[CompletionPair], pooling: Pooling) -> Result<EvalReport> {
    if pairs.is_empty() {
        return Err(Error::InvalidArgument("empty evaluation set".into()));
    }
    let mut preds = Vec::with_capacity(pairs.len());
    let mut ious = Vec::with_capacity(pairs.len());
    for p in pairs {
        let pred = model.complete(&p.condition)?;
        ious.push(iou(&pred, &p.target, IOU_THRESHOLD)?);
        preds.push(pred);
    }
    let mut classes: Vec<String> = Vec::new();
    for p in pairs {
        let c = p.target.class_tag.clone().unwrap_or_else(|| "all".into());
        if !classes.contains(&c) {
            classes.push(c);
        }
    }
    let mut per_class_ap = Vec::new();
    for class in classes {
        let (cp, ct): (Vec<_>, Vec<_>) = preds
            .iter()
            .zip(pairs)
            .filter(|(_, p)| p.target.class_tag.as_deref().unwrap_or("all") == class)
            .map(|(pred, p)| (pred.clone(), p.target.clone()))
            .unzip();
        let ap = average_precision_grids(&cp, &ct, pooling)?;
        per_class_ap.push(ClassScore { class, ap });
    }
    let aps: Vec<f64> = per_class_ap.iter().map(|c| c.ap).collect();
    Ok(EvalReport {
        sample_count: pairs.len(),
        threshold: IOU_THRESHOLD,
        pooling,
        mean_ap: mean_of_classes(&aps),
        mean_iou: mean_of_classes(&ious),
        per_class_ap,
        iou: ious,
    })
}

/// Looks up the target stored for an identical condition.
pub struct OracleModel {
    pub pairs: Vec<CompletionPair>,
}

impl CompletionModel for OracleModel {
    fn complete(&self, condition: &Tensor) -> Result<VoxelGrid> {
        self.pairs
            .iter()
            .find(|p| &p.condition == condition)
            .map(|p| p.target.clone())
            .ok_or_else(|| Error::Model("oracle has no entry for this condition".into()))
    }
}

pub struct EmptyModel {
    pub extent: usize,
}

impl CompletionModel for EmptyModel {
    fn complete(&self, _: &Tensor) -> Result<VoxelGrid> {
        VoxelGrid::empty(self.extent)
    }
}

/// Returns the target of the training condition closest in squared L2.
pub struct NearestNeighborModel {
    pub train: Vec<CompletionPair>,
}

impl CompletionModel for NearestNeighborModel {
    fn complete(&self, condition: &Tensor) -> Result<VoxelGrid> {
        let mut best: Option<(f64, &VoxelGrid)> = None;
        for p in &self.train {
            if p.condition.shape() != condition.shape() {
                return Err(Error::shape("nearest_neighbor", p.condition.shape(), condition.shape()));
            }
            let d: f64 = p
                .condition
                .data()
                .iter()
                .zip(condition.data())
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            if best.is_none_or(|(bd, _)| d < bd) {
                best = Some((d, &p.target));
            }
        }
        best.map(|(_, g)| g.clone())
            .ok_or_else(|| Error::Model("nearest-neighbor model has no training pairs".into()))
    }
}

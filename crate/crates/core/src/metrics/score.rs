use serde::{Deserialize, Serialize};

use crate::exec::Execution;
use crate::labels::LabelMatrix;
use crate::ontology::{Channel, NUM_REGIONS};

use super::MetricError;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassCounts {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl ClassCounts {
    pub fn support(&self) -> u64 {
        self.tp + self.fn_
    }

    pub fn precision(&self) -> f64 {
        ratio(self.tp, self.tp + self.fp)
    }

    pub fn recall(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_)
    }
}

fn ratio(a: u64, b: u64) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

/// `2TP / (2TP + FP + FN)`, zero when the denominator is zero.
pub fn f1_score(c: ClassCounts) -> f64 {
    ratio(2 * c.tp, 2 * c.tp + c.fp + c.fn_)
}

/// Harmonic mean of precision and recall, zero when both are zero. Works on
/// any common scale (0..=1 or percentages).
pub fn f1_from_precision_recall(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

fn check_shapes(truth: &LabelMatrix, pred: &LabelMatrix) -> Result<(), MetricError> {
    if truth.len() != pred.len() {
        return Err(MetricError::LengthMismatch(pred.len(), truth.len()));
    }
    Ok(())
}

/// Per-class counts aggregated over every report and region.
pub fn confusion_counts(
    truth: &LabelMatrix,
    pred: &LabelMatrix,
    class_id: u8,
    channel: Channel,
) -> Result<ClassCounts, MetricError> {
    check_shapes(truth, pred)?;
    if !(1..=channel.num_classes() as u8).contains(&class_id) {
        return Err(MetricError::Invalid(format!("class {class_id} not in {channel:?} channel")));
    }
    let mut c = ClassCounts::default();
    for (t, p) in truth.reports.iter().zip(&pred.reports) {
        for l in 0..NUM_REGIONS {
            let (y, yh) = (t.0[l].class_id(channel), p.0[l].class_id(channel));
            c.tp += (y == class_id && yh == class_id) as u64;
            c.fp += (y != class_id && yh == class_id) as u64;
            c.fn_ += (y == class_id && yh != class_id) as u64;
        }
    }
    Ok(c)
}

/// Counts for every class of a channel in one pass; reports are processed
/// in parallel under [`Execution::Parallel`].
pub fn channel_counts(
    truth: &LabelMatrix,
    pred: &LabelMatrix,
    channel: Channel,
    exec: Execution,
) -> Result<Vec<ClassCounts>, MetricError> {
    check_shapes(truth, pred)?;
    let k = channel.num_classes();
    let per_report = exec.map_range(truth.len(), |j| {
        let mut c = vec![ClassCounts::default(); k];
        for l in 0..NUM_REGIONS {
            let y = truth.reports[j].0[l].class_id(channel) as usize - 1;
            let yh = pred.reports[j].0[l].class_id(channel) as usize - 1;
            if y == yh {
                c[y].tp += 1;
            } else {
                c[yh].fp += 1;
                c[y].fn_ += 1;
            }
        }
        c
    });
    let mut total = vec![ClassCounts::default(); k];
    for c in per_report {
        for (t, x) in total.iter_mut().zip(c) {
            t.tp += x.tp;
            t.fp += x.fp;
            t.fn_ += x.fn_;
        }
    }
    Ok(total)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Variant {
    PetAll,
    CtAll,
    PetAb,
    CtAb,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::PetAll, Variant::CtAll, Variant::PetAb, Variant::CtAb];

    pub fn channel(self) -> Channel {
        match self {
            Variant::PetAll | Variant::PetAb => Channel::Pet,
            Variant::CtAll | Variant::CtAb => Channel::Ct,
        }
    }

    pub fn includes(self, class_id: u8) -> bool {
        match self {
            Variant::PetAll | Variant::CtAll => true,
            Variant::PetAb | Variant::CtAb => class_id != self.channel().normal_id(),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Variant::PetAll => "PET-All",
            Variant::CtAll => "CT-All",
            Variant::PetAb => "PET-Ab",
            Variant::CtAb => "CT-Ab",
        }
    }
}

/// Macro mean of the F1 values whose class belongs to the variant's subset.
/// `f1s` holds `(class_id, f1)` pairs of the variant's channel.
pub fn petrg_score(f1s: &[(u8, f64)], variant: Variant) -> Result<f64, MetricError> {
    let chosen: Vec<f64> = f1s
        .iter()
        .filter(|(k, _)| variant.includes(*k))
        .map(|&(_, f)| f)
        .collect();
    if chosen.is_empty() {
        return Err(MetricError::Invalid(format!("{} has an empty class subset", variant.name())));
    }
    Ok(chosen.iter().sum::<f64>() / chosen.len() as f64)
}

/// Support-weighted mean F1 over the variant's subset; zero when no support.
pub fn weighted_score(classes: &[ClassScore], variant: Variant) -> f64 {
    let (num, den) = classes
        .iter()
        .filter(|c| variant.includes(c.class_id))
        .fold((0.0, 0u64), |(n, d), c| (n + c.f1 * c.support as f64, d + c.support));
    if den == 0 {
        0.0
    } else {
        num / den as f64
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassScore {
    pub channel: Channel,
    pub class_id: u8,
    pub label: String,
    #[serde(flatten)]
    pub counts: ClassCounts,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VariantScore {
    pub variant: Variant,
    pub name: String,
    pub macro_f1: f64,
    pub weighted_f1: f64,
}

/// Per-class scores and aggregates, all on a 0..=1 scale.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub reports: usize,
    pub classes: Vec<ClassScore>,
    pub variants: Vec<VariantScore>,
}

impl ScoreReport {
    pub fn get(&self, v: Variant) -> &VariantScore {
        self.variants.iter().find(|s| s.variant == v).expect("all variants present")
    }

    /// Plain-text table on the 0..=100 scale.
    pub fn table(&self) -> String {
        let mut out = format!("{:<6} {:<36} {:>7} {:>7} {:>7} {:>8}\n", "chan", "class", "P", "R", "F1", "support");
        for c in &self.classes {
            out.push_str(&format!(
                "{:<6} {:<36} {:>7.2} {:>7.2} {:>7.2} {:>8}\n",
                format!("{:?}", c.channel),
                c.label,
                100.0 * c.precision,
                100.0 * c.recall,
                100.0 * c.f1,
                c.support
            ));
        }
        for v in &self.variants {
            out.push_str(&format!(
                "{:<8} macro {:>7.2}  weighted {:>7.2}\n",
                v.name,
                100.0 * v.macro_f1,
                100.0 * v.weighted_f1
            ));
        }
        out
    }
}

/// Full score. With `exclude_empty_classes`, classes that never occur in
/// either matrix are left out of the macro averages.
pub fn score_labels(
    truth: &LabelMatrix,
    pred: &LabelMatrix,
    exclude_empty_classes: bool,
    exec: Execution,
) -> Result<ScoreReport, MetricError> {
    if truth.is_empty() {
        return Err(MetricError::EmptyCorpus);
    }
    let mut classes = Vec::new();
    for channel in [Channel::Pet, Channel::Ct] {
        for (i, c) in channel_counts(truth, pred, channel, exec)?.into_iter().enumerate() {
            let class_id = i as u8 + 1;
            classes.push(ClassScore {
                channel,
                class_id,
                label: channel.class_label(class_id).expect("in range").to_string(),
                counts: c,
                precision: c.precision(),
                recall: c.recall(),
                f1: f1_score(c),
                support: c.support(),
            });
        }
    }
    let variants = Variant::ALL
        .iter()
        .map(|&v| {
            let mine: Vec<&ClassScore> = classes
                .iter()
                .filter(|c| c.channel == v.channel())
                .filter(|c| !(exclude_empty_classes && c.counts.tp + c.counts.fp + c.counts.fn_ == 0))
                .collect();
            let f1s: Vec<(u8, f64)> = mine.iter().map(|c| (c.class_id, c.f1)).collect();
            let owned: Vec<ClassScore> = mine.into_iter().cloned().collect();
            Ok(VariantScore {
                variant: v,
                name: v.name().to_string(),
                macro_f1: petrg_score(&f1s, v)?,
                weighted_f1: weighted_score(&owned, v),
            })
        })
        .collect::<Result<Vec<_>, MetricError>>()?;
    Ok(ScoreReport { reports: truth.len(), classes, variants })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::labels::{RegionLabel, ReportLabels};
    use crate::ontology::{Density, Uptake};

    #[test]
    fn f1_arithmetic() {
        assert_eq!(f1_score(ClassCounts { tp: 1, fp: 1, fn_: 1 }), 0.5);
        assert_eq!(f1_score(ClassCounts::default()), 0.0);
    }

    #[test]
    fn single_false_positive() {
        let truth = LabelMatrix::all_normal(1);
        let mut p = ReportLabels::all_normal();
        p.0[3] = RegionLabel::new(Uptake::Intense, Density::Normal);
        let pred = LabelMatrix::new(vec![p]);
        assert_eq!(
            confusion_counts(&truth, &pred, 1, Channel::Pet).unwrap(),
            ClassCounts { tp: 0, fp: 1, fn_: 0 }
        );
        assert_eq!(
            confusion_counts(&truth, &pred, 5, Channel::Pet).unwrap(),
            ClassCounts { tp: 23, fp: 0, fn_: 1 }
        );
    }

    #[test]
    fn perfect_prediction_scores_one() {
        let mut r = ReportLabels::all_normal();
        for (i, l) in r.0.iter_mut().enumerate() {
            *l = RegionLabel::new(Uptake::ALL[i % 5], Density::ALL[i % 8]);
        }
        let m = LabelMatrix::new(vec![r; 3]);
        let s = score_labels(&m, &m, false, Execution::Sequential).unwrap();
        for v in Variant::ALL {
            assert_eq!(s.get(v).macro_f1, 1.0);
        }
        let k: u64 = s.classes.iter().filter(|c| c.channel == Channel::Pet).map(|c| c.counts.tp).sum();
        assert_eq!(k, 3 * 24);
    }

    #[test]
    fn validation() {
        let a = LabelMatrix::all_normal(2);
        let b = LabelMatrix::all_normal(3);
        assert!(confusion_counts(&a, &b, 1, Channel::Ct).is_err());
        assert!(confusion_counts(&a, &a, 6, Channel::Pet).is_err());
        assert!(petrg_score(&[(5, 1.0)], Variant::PetAb).is_err());
    }

    #[test]
    fn exclusion_flag_drops_absent_classes() {
        let mut r = ReportLabels::all_normal();
        r.0[0] = RegionLabel::new(Uptake::Mild, Density::Calcification);
        let m = LabelMatrix::new(vec![r, ReportLabels::all_normal()]);
        let s = score_labels(&m, &m, false, Execution::Sequential).unwrap();
        assert!((s.get(Variant::PetAll).macro_f1 - 0.4).abs() < 1e-12);
        let s = score_labels(&m, &m, true, Execution::Sequential).unwrap();
        assert_eq!(s.get(Variant::PetAll).macro_f1, 1.0);
        assert_eq!(s.get(Variant::CtAb).macro_f1, 1.0);
        // nothing abnormal left to average over
        let n = LabelMatrix::all_normal(2);
        assert!(score_labels(&n, &n, true, Execution::Sequential).is_err());
    }
}

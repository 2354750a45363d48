//! On-disk text formats for training history and bank snapshots.

use crate::bank::{BankConfig, MemoryBank, Split};
use crate::data::format_f64;
use crate::error::{DacError, Result};
use crate::linalg::Matrix;
use crate::pseudo::{refine_centroids, PseudoLabelState};
use crate::trainer::EpochRecord;

pub const METRICS_HEADER: &str =
    "epoch,acc_target,acc_source_like_split,acc_target_specific_split,loss_total,loss_con,loss_self,loss_mmd,n_source_like";

fn cell(v: Option<f64>) -> String {
    v.map(format_f64).unwrap_or_default()
}

/// One metrics row; accuracy cells are empty when ground truth or the
/// corresponding split is missing.
pub fn metrics_row(record: &EpochRecord) -> String {
    let eval = record.evaluation.as_ref();
    [
        record.epoch.to_string(),
        cell(eval.map(|e| e.accuracy)),
        cell(eval.and_then(|e| e.source_like_accuracy)),
        cell(eval.and_then(|e| e.target_specific_accuracy)),
        format_f64(record.loss.total),
        format_f64(record.loss.con),
        format_f64(record.loss.self_training),
        format_f64(record.loss.mmd),
        record.n_source_like.to_string(),
    ]
    .join(",")
}

pub fn metrics_csv(history: &[EpochRecord]) -> String {
    let mut s = String::from(METRICS_HEADER);
    s.push('\n');
    for r in history {
        s.push_str(&metrics_row(r));
        s.push('\n');
    }
    s
}

pub fn feature_dump_name(epoch: usize) -> String {
    format!("features_epoch{}.csv", epoch)
}

/// Bank rows with their division and the pseudo-labels in force.
pub fn feature_dump_csv(bank: &MemoryBank, pseudo: &PseudoLabelState) -> Result<String> {
    if pseudo.labels.len() != bank.len() {
        return Err(DacError::invalid("pseudo-label count differs from bank size"));
    }
    let b = bank.features().cols();
    let mut s = String::from("idx");
    for j in 0..b {
        s.push_str(&format!(",z{}", j));
    }
    s.push_str(",split,split_class,pseudo_label\n");
    for i in 0..bank.len() {
        s.push_str(&i.to_string());
        for &v in bank.row(i) {
            s.push(',');
            s.push_str(&format_f64(v));
        }
        s.push_str(&format!(
            ",{},{},{}\n",
            bank.split()[i].as_str(),
            bank.split_class()[i],
            pseudo.labels[i]
        ));
    }
    Ok(s)
}

/// Contents of a feature dump read back from disk.
#[derive(Debug, Clone, PartialEq)]
pub struct BankSnapshot {
    pub features: Matrix,
    pub split: Vec<Split>,
    pub split_class: Vec<usize>,
    pub pseudo_labels: Vec<usize>,
}

impl BankSnapshot {
    /// Rebuilds a bank with this division (centroids recomputed) plus the
    /// pseudo-label state, whose centroids are the hard-label class means.
    pub fn restore(&self, classes: usize, config: BankConfig) -> Result<(MemoryBank, PseudoLabelState)> {
        if let Some(&c) = self
            .split_class
            .iter()
            .chain(&self.pseudo_labels)
            .find(|&&c| c >= classes)
        {
            return Err(DacError::invalid(format!(
                "class {} out of range for {} classes",
                c, classes
            )));
        }
        let mut bank = MemoryBank::from_features(self.features.clone(), classes, config)?;
        bank.set_division(self.split.clone(), self.split_class.clone())?;
        bank.class_centroids();
        let zeros = Matrix::zeros(classes, self.features.cols());
        let centroids = refine_centroids(&self.features, &self.pseudo_labels, &zeros)?;
        Ok((
            bank,
            PseudoLabelState {
                centroids,
                labels: self.pseudo_labels.clone(),
                epoch: 0,
            },
        ))
    }
}

fn split_of(s: &str) -> Option<Split> {
    [Split::SourceLike, Split::TargetSpecific]
        .into_iter()
        .find(|v| v.as_str() == s)
}

/// Parses the output of [`feature_dump_csv`]. Rows count from 1 after the
/// header in error messages.
pub fn parse_feature_dump(text: &str) -> Result<BankSnapshot> {
    let mut lines = text.lines();
    let header: Vec<&str> = lines
        .next()
        .ok_or_else(|| DacError::parse(0, "empty file"))?
        .split(',')
        .collect();
    let width = header.len();
    if width < 5 || header[0] != "idx" || header[width - 3..] != ["split", "split_class", "pseudo_label"] {
        return Err(DacError::parse(0, "expected idx,z0..,split,split_class,pseudo_label"));
    }
    let b = width - 4;
    for (j, name) in header[1..=b].iter().enumerate() {
        if *name != format!("z{}", j) {
            return Err(DacError::parse(0, format!("expected column z{}, found '{}'", j, name)));
        }
    }
    let (mut z, mut split, mut split_class, mut pseudo) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for (k, line) in lines.enumerate() {
        let row = k + 1;
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != width {
            return Err(DacError::parse(
                row,
                format!("expected {} cells, found {}", width, cells.len()),
            ));
        }
        if cells[0].parse::<usize>().ok() != Some(split.len()) {
            return Err(DacError::parse(row, format!("idx '{}' out of sequence", cells[0])));
        }
        for c in &cells[1..=b] {
            z.push(
                c.parse::<f64>()
                    .map_err(|_| DacError::parse(row, format!("bad feature '{}'", c)))?,
            );
        }
        split
            .push(split_of(cells[b + 1]).ok_or_else(|| DacError::parse(row, format!("bad split '{}'", cells[b + 1])))?);
        let int = |c: &str| {
            c.parse::<usize>()
                .map_err(|_| DacError::parse(row, format!("bad class '{}'", c)))
        };
        split_class.push(int(cells[b + 2])?);
        pseudo.push(int(cells[b + 3])?);
    }
    if split.is_empty() {
        return Err(DacError::parse(1, "no rows"));
    }
    Ok(BankSnapshot {
        features: Matrix::from_vec(split.len(), b, z)?,
        split,
        split_class,
        pseudo_labels: pseudo,
    })
}

use std::fmt::Write as _;

use crate::diffnet::Batch;
use crate::error::{Error, Result};
use crate::sphgrid::{make_grid, LabelMap};

/// Confusion totals accumulated over samples; IoUs are derived on demand.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub num_classes: usize,
    pub samples: usize,
    /// Area of `pred = c and gt = c`.
    pub intersection: Vec<f64>,
    /// Area of `pred = c or gt = c`.
    pub union: Vec<f64>,
    pub intersection_nodes: Vec<u64>,
    pub union_nodes: Vec<u64>,
    pub correct_area: f64,
    pub total_area: f64,
}

impl EvalReport {
    pub fn new(num_classes: usize) -> Self {
        EvalReport {
            num_classes,
            samples: 0,
            intersection: vec![0.0; num_classes],
            union: vec![0.0; num_classes],
            intersection_nodes: vec![0; num_classes],
            union_nodes: vec![0; num_classes],
            correct_area: 0.0,
            total_area: 0.0,
        }
    }

    /// Adds one prediction.
    pub fn add(&mut self, pred: &LabelMap, gt: &LabelMap) -> Result<()> {
        if pred.bandlimit() != gt.bandlimit() {
            return Err(Error::BandlimitMismatch {
                expected: gt.bandlimit(),
                actual: pred.bandlimit(),
            });
        }
        if pred.num_classes() > self.num_classes || gt.num_classes() > self.num_classes {
            return Err(Error::ShapeMismatch(format!(
                "{} / {} classes in a {}-class report",
                pred.num_classes(),
                gt.num_classes(),
                self.num_classes
            )));
        }
        let grid = gt.grid();
        let res = grid.resolution();
        for (i, (&p, &g)) in pred.labels().iter().zip(gt.labels()).enumerate() {
            let a = grid.node_area(i / res);
            let (p, g) = (p as usize, g as usize);
            self.total_area += a;
            if p == g {
                self.correct_area += a;
                self.intersection[p] += a;
                self.union[p] += a;
                self.intersection_nodes[p] += 1;
                self.union_nodes[p] += 1;
            } else {
                self.union[p] += a;
                self.union[g] += a;
                self.union_nodes[p] += 1;
                self.union_nodes[g] += 1;
            }
        }
        self.samples += 1;
        Ok(())
    }

    pub fn merge(&mut self, other: &EvalReport) {
        assert_eq!(self.num_classes, other.num_classes, "merging reports of different class counts");
        self.samples += other.samples;
        for c in 0..self.num_classes {
            self.intersection[c] += other.intersection[c];
            self.union[c] += other.union[c];
            self.intersection_nodes[c] += other.intersection_nodes[c];
            self.union_nodes[c] += other.union_nodes[c];
        }
        self.correct_area += other.correct_area;
        self.total_area += other.total_area;
    }

    /// Area-weighted IoU per class; `None` where the union is empty.
    pub fn iou(&self) -> Vec<Option<f64>> {
        self.intersection
            .iter()
            .zip(&self.union)
            .map(|(i, u)| (*u > 0.0).then(|| i / u))
            .collect()
    }

    pub fn iou_nodes(&self) -> Vec<Option<f64>> {
        self.intersection_nodes
            .iter()
            .zip(&self.union_nodes)
            .map(|(i, u)| (*u > 0).then(|| *i as f64 / *u as f64))
            .collect()
    }

    pub fn miou_weighted(&self) -> f64 {
        mean_present(&self.iou())
    }

    pub fn miou_unweighted(&self) -> f64 {
        mean_present(&self.iou_nodes())
    }

    pub fn pixel_accuracy(&self) -> f64 {
        if self.total_area > 0.0 {
            self.correct_area / self.total_area
        } else {
            0.0
        }
    }

    /// One `key=value` pair per line.
    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "samples={}", self.samples);
        let _ = writeln!(out, "miou_w={:.6}", self.miou_weighted());
        let _ = writeln!(out, "miou_u={:.6}", self.miou_unweighted());
        let _ = writeln!(out, "pixel_acc={:.6}", self.pixel_accuracy());
        for (c, iou) in self.iou().iter().enumerate() {
            match iou {
                Some(v) => {
                    let _ = writeln!(out, "iou_{c}={v:.6}");
                }
                None => {
                    let _ = writeln!(out, "iou_{c}=nan");
                }
            }
        }
        out
    }
}

fn mean_present(v: &[Option<f64>]) -> f64 {
    let present: Vec<f64> = v.iter().flatten().copied().collect();
    if present.is_empty() {
        0.0
    } else {
        present.iter().sum::<f64>() / present.len() as f64
    }
}

/// IoU report of a single prediction.
pub fn mean_iou(pred: &LabelMap, gt: &LabelMap, num_classes: usize) -> Result<EvalReport> {
    let mut r = EvalReport::new(num_classes);
    r.add(pred, gt)?;
    Ok(r)
}

/// Per-sample argmax of a logits batch.
pub fn argmax(logits: &Batch) -> Result<Vec<LabelMap>> {
    let grid = make_grid(logits.bandlimit)?;
    let nodes = logits.nodes();
    let c = logits.channels;
    (0..logits.samples)
        .map(|n| {
            let s = logits.sample(n);
            let labels = (0..nodes)
                .map(|i| {
                    let mut best = 0;
                    for k in 1..c {
                        if s[k * nodes + i] > s[best * nodes + i] {
                            best = k;
                        }
                    }
                    best as u16
                })
                .collect();
            LabelMap::new(grid.clone(), c, labels)
        })
        .collect()
}

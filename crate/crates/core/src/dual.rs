//! Linked row/column projections of one data matrix and the propagation of
//! user edits from either view to the other.

use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::projection::{train, ProjectionModel, TrainConfig};
use crate::tensor::Dense2D;

type Matrix = Dense2D<f64>;
type Model = ProjectionModel<f64>;

/// Allowed range of a scale factor.
pub const SCALE_BOUNDS: (f64, f64) = (0.1, 10.0);
/// Range weights are clamped to for display.
pub const DISPLAY_BOUNDS: (f64, f64) = (0.1, 10.0);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    /// Hybrids: the rows of the matrix.
    Rows,
    /// Genes: the columns of the matrix.
    Cols,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ScaleCenter {
    #[default]
    Centroid,
    Point([f64; 2]),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ModificationKind {
    Move {
        delta: [f64; 2],
    },
    Scale {
        factor: f64,
        #[serde(default)]
        center: ScaleCenter,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModificationEvent {
    pub side: Side,
    pub indices: Vec<usize>,
    pub kind: ModificationKind,
}

impl ModificationEvent {
    pub fn moved(side: Side, indices: Vec<usize>, delta: [f64; 2]) -> Self {
        Self {
            side,
            indices,
            kind: ModificationKind::Move { delta },
        }
    }

    pub fn scaled(side: Side, indices: Vec<usize>, factor: f64, center: ScaleCenter) -> Self {
        Self {
            side,
            indices,
            kind: ModificationKind::Scale { factor, center },
        }
    }

    fn validate(&self, len: usize) -> Result<()> {
        if self.indices.is_empty() {
            return Err(Error::Argument("empty selection".into()));
        }
        if let Some(&i) = self.indices.iter().find(|&&i| i >= len) {
            return Err(Error::Argument(format!("index {i} out of range for {len} points")));
        }
        match self.kind {
            ModificationKind::Move { delta } if !delta.iter().all(|v| v.is_finite()) => {
                Err(Error::Argument("move delta must be finite".into()))
            }
            ModificationKind::Scale { factor, center } => {
                if !(SCALE_BOUNDS.0..=SCALE_BOUNDS.1).contains(&factor) {
                    return Err(Error::Argument(format!(
                        "scale factor {factor} outside [{}, {}]",
                        SCALE_BOUNDS.0, SCALE_BOUNDS.1
                    )));
                }
                if let ScaleCenter::Point(c) = center {
                    if !c.iter().all(|v| v.is_finite()) {
                        return Err(Error::Argument("scale center must be finite".into()));
                    }
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }
}

/// Least-squares diagonal column weights: `w_j = <x_j, x'_j> / <x_j, x_j>`,
/// or 1 where column `j` of `x` is zero.
pub fn gene_weights(x: &Matrix, x_new: &Matrix) -> Result<Vec<f64>> {
    if x.shape() != x_new.shape() {
        return Err(Error::dim("gene_weights", format!("{:?}", x.shape()), format!("{:?}", x_new.shape())));
    }
    let mut num = vec![0.0; x.cols()];
    let mut den = vec![0.0; x.cols()];
    for (a, b) in x.row_iter().zip(x_new.row_iter()) {
        for j in 0..a.len() {
            num[j] += a[j] * b[j];
            den[j] += a[j] * a[j];
        }
    }
    Ok(num.iter().zip(&den).map(|(&n, &d)| if d == 0.0 { 1.0 } else { n / d }).collect())
}

/// Least-squares diagonal row weights: `w_i = <x_i, x'_i> / <x_i, x_i>`,
/// or 1 where row `i` of `x` is zero.
pub fn hybrid_weights(x: &Matrix, x_new: &Matrix) -> Result<Vec<f64>> {
    if x.shape() != x_new.shape() {
        return Err(Error::dim("hybrid_weights", format!("{:?}", x.shape()), format!("{:?}", x_new.shape())));
    }
    Ok(x.row_iter()
        .zip(x_new.row_iter())
        .map(|(a, b)| {
            let d: f64 = a.iter().map(|v| v * v).sum();
            if d == 0.0 {
                1.0
            } else {
                a.iter().zip(b).map(|(p, q)| p * q).sum::<f64>() / d
            }
        })
        .collect())
}

/// Weight clamped to the display range.
pub fn display_weight(w: f64) -> f64 {
    w.clamp(DISPLAY_BOUNDS.0, DISPLAY_BOUNDS.1)
}

/// Content hash of a matrix (shape and exact bit patterns).
pub fn fingerprint(x: &Matrix) -> String {
    let mut h = Sha256::new();
    h.update((x.rows() as u64).to_le_bytes());
    h.update((x.cols() as u64).to_le_bytes());
    for v in x.as_slice() {
        h.update(v.to_bits().to_le_bytes());
    }
    hex::encode(h.finalize())
}

/// Error-free accumulation of translations (hi + lo is the exact sum), so a
/// move followed by its opposite restores the previous offset bit for bit.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
struct Compensated {
    hi: f64,
    lo: f64,
}

impl Compensated {
    fn add(self, x: f64) -> Self {
        let s = self.hi + x;
        let bb = s - self.hi;
        let err = (self.hi - (s - bb)) + (x - bb);
        let lo = self.lo + err;
        let hi = s + lo;
        Self {
            hi,
            lo: lo - (hi - s),
        }
    }

    fn value(self) -> f64 {
        self.hi + self.lo
    }
}

/// Layout of one view as `base * scale + offset` per point and axis.
#[derive(Clone, Debug)]
struct Layout {
    base: Matrix,
    scale: Vec<[f64; 2]>,
    offset: Vec<[Compensated; 2]>,
}

impl Layout {
    fn new(base: Matrix) -> Self {
        let n = base.rows();
        Self {
            base,
            scale: vec![[1.0; 2]; n],
            offset: vec![[Compensated::default(); 2]; n],
        }
    }

    fn point(&self, i: usize, axis: usize) -> f64 {
        self.base[(i, axis)] * self.scale[i][axis] + self.offset[i][axis].value()
    }

    fn positions(&self) -> Matrix {
        Dense2D::from_fn(self.base.rows(), 2, |i, a| self.point(i, a))
    }

    fn apply(&mut self, indices: &[usize], kind: ModificationKind) {
        match kind {
            ModificationKind::Move { delta } => {
                for &i in indices {
                    for a in 0..2 {
                        self.offset[i][a] = self.offset[i][a].add(delta[a]);
                    }
                }
            }
            ModificationKind::Scale { factor, .. } if factor == 1.0 => {}
            ModificationKind::Scale { factor, center } => {
                let c = match center {
                    ScaleCenter::Point(c) => c,
                    ScaleCenter::Centroid => {
                        let mut c = [0.0; 2];
                        for &i in indices {
                            for (a, ca) in c.iter_mut().enumerate() {
                                *ca += self.point(i, a);
                            }
                        }
                        c.map(|v| v / indices.len() as f64)
                    }
                };
                // f (base * s + b - c) + c
                for &i in indices {
                    for a in 0..2 {
                        self.scale[i][a] *= factor;
                        let b = factor * (self.offset[i][a].value() - c[a]) + c[a];
                        self.offset[i][a] = Compensated { hi: b, lo: 0.0 };
                    }
                }
            }
        }
    }
}

/// Where the points of one layout were aimed and where their current
/// preimages actually project. A point whose target has not changed keeps
/// its preimage.
#[derive(Clone, Debug)]
struct Aim {
    targets: Matrix,
    fitted: Matrix,
}

impl Aim {
    /// Preimages that project exactly onto `targets`.
    fn exact(targets: Matrix) -> Self {
        Self {
            fitted: targets.clone(),
            targets,
        }
    }
}

/// New preimages for the points whose targets changed.
struct Reinverted {
    indices: Vec<usize>,
    rows: Matrix,
    fitted: Matrix,
}

impl Reinverted {
    fn write_rows(&self, rows: &mut Matrix) {
        for (f, &i) in self.indices.iter().enumerate() {
            rows.row_mut(i).copy_from_slice(self.rows.row(f));
        }
    }

    fn write_aim(&self, targets: &Matrix, aim: &mut Aim) {
        for (f, &i) in self.indices.iter().enumerate() {
            aim.fitted.row_mut(i).copy_from_slice(self.fitted.row(f));
            aim.targets.row_mut(i).copy_from_slice(targets.row(i));
        }
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum()
}

/// Inverts the points of `targets` that differ from `aim`. `rows` holds the
/// current preimages. Each point starts from whichever of the refined
/// inverse and its current row projects closer to its new target.
fn reinvert(model: &Model, targets: &Matrix, aim: &Aim, rows: &Matrix) -> Result<Reinverted> {
    let indices: Vec<usize> = (0..targets.rows())
        .filter(|&i| aim.targets.row(i) != targets.row(i))
        .collect();
    let t = targets.select_rows(&indices);
    let c = &model.config;
    let (mut fresh, mut fitted) = model.inverse_project_fitted(&t, c.phi_k, c.inverse_refine)?;
    for (f, &i) in indices.iter().enumerate() {
        if sq_dist(aim.fitted.row(i), t.row(f)) < sq_dist(fitted.row(f), t.row(f)) {
            fresh.row_mut(f).copy_from_slice(rows.row(i));
            fitted.row_mut(f).copy_from_slice(aim.fitted.row(i));
        }
    }
    if c.preimage_steps > 0 && !indices.is_empty() {
        fresh = model.fit_preimage(&t, &fresh, c.preimage_steps, c.preimage_lr)?;
        fitted = model.project(&fresh)?;
    }
    Ok(Reinverted {
        indices,
        rows: fresh,
        fitted,
    })
}

/// Column-side model inputs: columns of `x` after the row model's column
/// standardization.
pub fn gene_inputs(model_rows: &Model, x: &Matrix) -> Result<Matrix> {
    if x.cols() != model_rows.input_dim {
        return Err(Error::dim("gene_inputs", model_rows.input_dim, x.cols()));
    }
    let mut out = x.transpose();
    for j in 0..out.rows() {
        let (m, s) = (model_rows.mean[j], model_rows.std[j]);
        out.row_mut(j).iter_mut().for_each(|v| *v = (*v - m) / s);
    }
    Ok(out)
}

/// Trains the row model on `x` and the column model on the standardized
/// columns of `x`.
pub fn train_pair(x: &Matrix, rows: &TrainConfig, cols: &TrainConfig) -> Result<(Model, Model)> {
    let model_rows = train(x, rows)?;
    let model_cols = train(&gene_inputs(&model_rows, x)?, cols)?;
    Ok((model_rows, model_cols))
}

/// Live state of one dual analysis.
#[derive(Clone, Debug)]
pub struct DualSession {
    x_orig: Arc<Matrix>,
    x_cur: Matrix,
    model_rows: Arc<Model>,
    model_cols: Arc<Model>,
    rows_layout: Layout,
    cols_layout: Layout,
    w_genes: Vec<f64>,
    w_hybrids: Vec<f64>,
    history: Vec<ModificationEvent>,
    fingerprint: String,
    /// Preimages of the gene layout, as column-model inputs. The hybrid
    /// layout's preimages are `x_cur` itself.
    columns: Matrix,
    rows_aim: Aim,
    cols_aim: Aim,
}

/// Serializable view of a session.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionSnapshot {
    pub fingerprint: String,
    pub hybrids: Matrix,
    pub genes: Matrix,
    /// Gene weights relative to the matrix before the latest event.
    pub gene_weights: Vec<f64>,
    /// Hybrid weights relative to the matrix before the latest event.
    pub hybrid_weights: Vec<f64>,
    /// Gene weights relative to the original matrix.
    pub gene_weights_from_original: Vec<f64>,
    /// Hybrid weights relative to the original matrix.
    pub hybrid_weights_from_original: Vec<f64>,
    pub history: Vec<ModificationEvent>,
}

impl DualSession {
    /// Opens a session on `x` with trained models for both sides. The row
    /// model must take `x.cols()` inputs and the column model `x.rows()`.
    pub fn new(x: Matrix, model_rows: Arc<Model>, model_cols: Arc<Model>) -> Result<Self> {
        if model_rows.input_dim != x.cols() || model_cols.input_dim != x.rows() {
            return Err(Error::dim(
                "DualSession",
                format!("row model on {} columns, column model on {} rows", x.cols(), x.rows()),
                format!("{} and {}", model_rows.input_dim, model_cols.input_dim),
            ));
        }
        if model_rows.train_embeddings.rows() == 0 || model_cols.train_embeddings.rows() == 0 {
            return Err(Error::State("both models must be trained".into()));
        }
        let s = model_rows.project(&x)?;
        let columns = gene_inputs(&model_rows, &x)?;
        let g = model_cols.project(&columns)?;
        let (n, d) = x.shape();
        Ok(Self {
            fingerprint: fingerprint(&x),
            rows_aim: Aim::exact(s.clone()),
            cols_aim: Aim::exact(g.clone()),
            columns,
            x_cur: x.clone(),
            x_orig: Arc::new(x),
            model_rows,
            model_cols,
            rows_layout: Layout::new(s),
            cols_layout: Layout::new(g),
            w_genes: vec![1.0; d],
            w_hybrids: vec![1.0; n],
            history: Vec::new(),
        })
    }

    pub fn x_orig(&self) -> &Matrix {
        &self.x_orig
    }

    pub fn x_cur(&self) -> &Matrix {
        &self.x_cur
    }

    pub fn model_rows(&self) -> &Arc<Model> {
        &self.model_rows
    }

    pub fn model_cols(&self) -> &Arc<Model> {
        &self.model_cols
    }

    /// Hybrid layout `S` (`rows x 2`).
    pub fn hybrids(&self) -> Matrix {
        self.rows_layout.positions()
    }

    /// Gene layout `G` (`cols x 2`).
    pub fn genes(&self) -> Matrix {
        self.cols_layout.positions()
    }

    pub fn embedding(&self, side: Side) -> Matrix {
        match side {
            Side::Rows => self.hybrids(),
            Side::Cols => self.genes(),
        }
    }

    pub fn gene_weights(&self) -> &[f64] {
        &self.w_genes
    }

    pub fn hybrid_weights(&self) -> &[f64] {
        &self.w_hybrids
    }

    pub fn weights(&self, side: Side) -> &[f64] {
        match side {
            Side::Rows => &self.w_hybrids,
            Side::Cols => &self.w_genes,
        }
    }

    pub fn history(&self) -> &[ModificationEvent] {
        &self.history
    }

    pub fn fingerprint(&self) -> &str {
        &self.fingerprint
    }

    /// Applies one edit: moves or scales points of one view, maps the new
    /// layout back to a data matrix through the inverse projection, and
    /// re-projects the other view from that matrix.
    pub fn apply_modification(&mut self, event: &ModificationEvent) -> Result<()> {
        match event.side {
            Side::Rows => {
                event.validate(self.x_cur.rows())?;
                let mut layout = self.rows_layout.clone();
                layout.apply(&event.indices, event.kind);
                let targets = layout.positions();
                let re = reinvert(&self.model_rows, &targets, &self.rows_aim, &self.x_cur)?;
                let mut x_new = self.x_cur.clone();
                re.write_rows(&mut x_new);
                let columns = gene_inputs(&self.model_rows, &x_new)?;
                let g = self.model_cols.project(&columns)?;
                self.w_genes = gene_weights(&self.x_cur, &x_new)?;
                self.w_hybrids = vec![1.0; x_new.rows()];
                re.write_aim(&targets, &mut self.rows_aim);
                self.cols_aim = Aim::exact(g.clone());
                self.columns = columns;
                self.rows_layout = layout;
                self.cols_layout = Layout::new(g);
                self.x_cur = x_new;
            }
            Side::Cols => {
                event.validate(self.x_cur.cols())?;
                let mut layout = self.cols_layout.clone();
                layout.apply(&event.indices, event.kind);
                let targets = layout.positions();
                let re = reinvert(&self.model_cols, &targets, &self.cols_aim, &self.columns)?;
                let mut x_new = self.x_cur.clone();
                let (mean, std) = (&self.model_rows.mean, &self.model_rows.std);
                for (f, &j) in re.indices.iter().enumerate() {
                    for (i, &v) in re.rows.row(f).iter().enumerate() {
                        x_new[(i, j)] = v * std[j] + mean[j];
                    }
                }
                let s = self.model_rows.project(&x_new)?;
                self.w_hybrids = hybrid_weights(&self.x_cur, &x_new)?;
                self.w_genes = vec![1.0; x_new.cols()];
                re.write_rows(&mut self.columns);
                re.write_aim(&targets, &mut self.cols_aim);
                self.rows_aim = Aim::exact(s.clone());
                self.cols_layout = layout;
                self.rows_layout = Layout::new(s);
                self.x_cur = x_new;
            }
        }
        self.history.push(event.clone());
        Ok(())
    }

    /// Back to the original matrix, layouts and unit weights.
    pub fn reset(&mut self) -> Result<()> {
        let fresh = Self::new(
            (*self.x_orig).clone(),
            self.model_rows.clone(),
            self.model_cols.clone(),
        )?;
        *self = fresh;
        Ok(())
    }

    /// Re-applies a recorded history to a fresh session.
    pub fn replay(
        x: Matrix,
        model_rows: Arc<Model>,
        model_cols: Arc<Model>,
        history: &[ModificationEvent],
    ) -> Result<Self> {
        let mut s = Self::new(x, model_rows, model_cols)?;
        for e in history {
            s.apply_modification(e)?;
        }
        Ok(s)
    }

    pub fn snapshot(&self) -> Result<SessionSnapshot> {
        Ok(SessionSnapshot {
            fingerprint: self.fingerprint.clone(),
            hybrids: self.hybrids(),
            genes: self.genes(),
            gene_weights: self.w_genes.clone(),
            hybrid_weights: self.w_hybrids.clone(),
            gene_weights_from_original: gene_weights(&self.x_orig, &self.x_cur)?,
            hybrid_weights_from_original: hybrid_weights(&self.x_orig, &self.x_cur)?,
            history: self.history.clone(),
        })
    }
}

/// Median wall time of applying `event` to copies of `session`; copying is
/// not timed.
pub fn time_update(session: &DualSession, event: &ModificationEvent, repeats: usize) -> Result<f64> {
    if repeats == 0 {
        return Err(Error::Argument("repeats must be at least 1".into()));
    }
    let mut times = Vec::with_capacity(repeats);
    for _ in 0..repeats {
        let mut s = session.clone();
        let start = Instant::now();
        s.apply_modification(event)?;
        times.push(start.elapsed().as_secs_f64());
    }
    times.sort_by(f64::total_cmp);
    let mid = times.len() / 2;
    Ok(if times.len() % 2 == 1 {
        times[mid]
    } else {
        0.5 * (times[mid - 1] + times[mid])
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights_of_diagonal_example() {
        let x = Dense2D::from_rows(&[[1.0, 0.0], [0.0, 1.0]]).unwrap();
        let x2 = Dense2D::from_rows(&[[2.0, 0.0], [0.0, 3.0]]).unwrap();
        assert_eq!(gene_weights(&x, &x2).unwrap(), vec![2.0, 3.0]);
        assert_eq!(gene_weights(&x, &x).unwrap(), vec![1.0, 1.0]);
    }

    #[test]
    fn zero_column_and_row_guard() {
        let x = Dense2D::from_rows(&[[0.0, 1.0], [0.0, 2.0]]).unwrap();
        let x2 = Dense2D::from_rows(&[[5.0, 2.0], [1.0, 4.0]]).unwrap();
        assert_eq!(gene_weights(&x, &x2).unwrap(), vec![1.0, 2.0]);
        let r = Dense2D::from_rows(&[[0.0, 0.0], [1.0, 2.0]]).unwrap();
        let r2 = Dense2D::from_rows(&[[3.0, 3.0], [2.0, 4.0]]).unwrap();
        assert_eq!(hybrid_weights(&r, &r2).unwrap(), vec![1.0, 2.0]);
    }

    #[test]
    fn move_and_back_is_exact() {
        let base = Dense2D::from_fn(5, 2, |i, j| 0.1 * i as f64 - 0.37 * j as f64 + 1e-3);
        let mut l = Layout::new(base.clone());
        l.apply(&[1, 3], ModificationKind::Move { delta: [0.3, -7.1] });
        l.apply(&[1], ModificationKind::Move { delta: [1e8, 0.123] });
        l.apply(&[1], ModificationKind::Move { delta: [-1e8, -0.123] });
        l.apply(&[1, 3], ModificationKind::Move { delta: [-0.3, 7.1] });
        assert_eq!(l.positions(), base);
    }

    #[test]
    fn unit_scale_is_noop() {
        let base = Dense2D::from_fn(4, 2, |i, j| (i * 3 + j) as f64 * 0.7);
        let mut l = Layout::new(base.clone());
        l.apply(&[0, 2], ModificationKind::Scale { factor: 1.0, center: ScaleCenter::Centroid });
        assert_eq!(l.positions(), base);
        l.apply(&[0, 2], ModificationKind::Scale { factor: 2.0, center: ScaleCenter::Point([0.0, 0.0]) });
        assert_eq!(l.point(0, 0), 0.0);
        assert_eq!(l.point(2, 1), 2.0 * base[(2, 1)]);
    }

    #[test]
    fn event_validation() {
        let e = ModificationEvent::moved(Side::Rows, vec![], [0.0, 0.0]);
        assert!(matches!(e.validate(3), Err(Error::Argument(_))));
        let e = ModificationEvent::moved(Side::Rows, vec![3], [0.0, 0.0]);
        assert!(e.validate(3).is_err());
        let e = ModificationEvent::scaled(Side::Cols, vec![0], 11.0, ScaleCenter::Centroid);
        assert!(e.validate(3).is_err());
        let e = ModificationEvent::scaled(Side::Cols, vec![0], 0.1, ScaleCenter::Centroid);
        assert!(e.validate(3).is_ok());
    }

    #[test]
    fn event_json_shape() {
        let e = ModificationEvent::moved(Side::Rows, vec![1, 2], [0.5, -1.0]);
        let v: serde_json::Value = serde_json::to_value(&e).unwrap();
        assert_eq!(v["side"], "rows");
        assert_eq!(v["kind"]["type"], "move");
        let s: ModificationEvent = serde_json::from_str(
            r#"{"side":"cols","indices":[0],"kind":{"type":"scale","factor":2.0}}"#,
        )
        .unwrap();
        assert_eq!(s.kind, ModificationKind::Scale { factor: 2.0, center: ScaleCenter::Centroid });
    }
}

//! Downstream quantities: per-structure area/volume curves over the cycle and
//! the clinical metrics read off them.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::volume::{sax, Geometry, LabelMap, Task};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Unit {
    #[serde(rename = "mm2")]
    SquareMm,
    #[serde(rename = "mL")]
    Ml,
}

impl Unit {
    pub fn for_task(task: Task) -> Self {
        match task {
            Task::Aorta => Unit::SquareMm,
            Task::Sax => Unit::Ml,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Unit::SquareMm => "mm2",
            Unit::Ml => "mL",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhysioCurve {
    pub structure: u8,
    pub values: Vec<f64>,
    pub unit: Unit,
}

impl PhysioCurve {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Pixel count of `structure` in every frame, summed over slices.
pub fn pixel_counts(labels: &LabelMap, structure: u8) -> Vec<u64> {
    (0..labels.dims.frames)
        .map(|t| labels.frame(t).iter().filter(|&&c| c == structure).count() as u64)
        .collect()
}

/// Area (mm², aorta) or volume (mL, short axis) of one structure per frame.
pub fn structure_series(labels: &LabelMap, structure: u8, geometry: &Geometry) -> Result<PhysioCurve> {
    labels.task.check_class(structure)?;
    if structure == 0 {
        return Err(Error::invalid("structure", "background has no curve"));
    }
    let unit = Unit::for_task(labels.task);
    let area = geometry.pixel_area_mm2();
    let values = pixel_counts(labels, structure)
        .into_iter()
        .map(|n| match unit {
            Unit::SquareMm => n as f64 * area,
            Unit::Ml => n as f64 * area * geometry.slice_thickness / 1000.0,
        })
        .collect();
    Ok(PhysioCurve { structure, values, unit })
}

/// Curves of the structures the QC classifier reads (LV+RV, or aorta).
pub fn qc_curves(labels: &LabelMap, geometry: &Geometry) -> Result<Vec<PhysioCurve>> {
    labels
        .task
        .qc_structures()
        .into_iter()
        .map(|s| structure_series(labels, s, geometry))
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClinicalMetrics {
    pub lvedv: f64,
    pub lvesv: f64,
    pub rvedv: f64,
    pub rvesv: f64,
    /// Percent.
    pub lvef: f64,
    /// Percent.
    pub rvef: f64,
    pub ed_frame: usize,
    pub es_frame: usize,
}

fn argext(values: &[f64], better: impl Fn(f64, f64) -> bool) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if better(v, values[best]) {
            best = i;
        }
    }
    best
}

fn ejection(curve: &PhysioCurve) -> Result<(f64, f64, f64, usize, usize)> {
    if curve.is_empty() {
        return Err(Error::Empty("volume curve".into()));
    }
    let ed = argext(&curve.values, |a, b| a > b);
    let es = argext(&curve.values, |a, b| a < b);
    let (edv, esv) = (curve.values[ed], curve.values[es]);
    if edv <= 0.0 {
        return Err(Error::UndefinedEf);
    }
    Ok((edv, esv, 100.0 * (edv - esv) / edv, ed, es))
}

/// EDV/ESV as curve extrema; ED/ES frames from the LV curve (lowest index
/// on ties).
pub fn clinical_metrics(lv: &PhysioCurve, rv: &PhysioCurve) -> Result<ClinicalMetrics> {
    if lv.unit != Unit::Ml || rv.unit != Unit::Ml {
        return Err(Error::invalid("unit", "clinical metrics need volume curves in mL"));
    }
    if lv.len() != rv.len() {
        return Err(Error::Shape(format!("LV curve has {} frames, RV {}", lv.len(), rv.len())));
    }
    let (lvedv, lvesv, lvef, ed_frame, es_frame) = ejection(lv)?;
    let (rvedv, rvesv, rvef, _, _) = ejection(rv)?;
    Ok(ClinicalMetrics { lvedv, lvesv, rvedv, rvesv, lvef, rvef, ed_frame, es_frame })
}

/// Clinical metrics straight from a short-axis label map.
pub fn clinical_from_labels(labels: &LabelMap, geometry: &Geometry) -> Result<ClinicalMetrics> {
    if labels.task != Task::Sax {
        return Err(Error::invalid("task", "clinical metrics are defined for short-axis cines"));
    }
    let lv = structure_series(labels, sax::LV_BLOOD, geometry)?;
    let rv = structure_series(labels, sax::RV_BLOOD, geometry)?;
    clinical_metrics(&lv, &rv)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Normalisation {
    #[default]
    Max,
    None,
}

/// Stack curves into a `[T][D]` feature sequence.
pub fn prepare_qc_input(curves: &[PhysioCurve], norm: Normalisation) -> Result<Vec<Vec<f64>>> {
    let first = curves.first().ok_or_else(|| Error::Empty("no curves".into()))?;
    let t = first.len();
    if let Some(bad) = curves.iter().find(|c| c.len() != t) {
        return Err(Error::Shape(format!("curve lengths differ: {t} vs {}", bad.len())));
    }
    let scales: Vec<f64> = curves
        .iter()
        .map(|c| match norm {
            Normalisation::None => 1.0,
            Normalisation::Max => c.values.iter().copied().fold(0.0, f64::max),
        })
        .collect();
    Ok((0..t)
        .map(|i| {
            curves
                .iter()
                .zip(&scales)
                .map(|(c, &s)| if s > 0.0 { c.values[i] / s } else { 0.0 })
                .collect()
        })
        .collect())
}

/// CSV with columns `frame,structure,value,unit`.
pub fn curves_csv(task: Task, curves: &[PhysioCurve]) -> String {
    let mut out = String::from("frame,structure,value,unit\n");
    for c in curves {
        for (t, v) in c.values.iter().enumerate() {
            let _ = writeln!(out, "{t},{},{v},{}", task.class_name(c.structure), c.unit.as_str());
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::Dims;

    fn geom(sx: f64, thick: f64) -> Geometry {
        Geometry { pixel_spacing: [sx, sx], slice_thickness: thick }
    }

    fn map_with(task: Task, slices: usize, per_slice: usize) -> LabelMap {
        let dims = Dims { frames: 1, slices, height: 16, width: 16 };
        let mut l = LabelMap::background(task, dims);
        for s in 0..slices {
            l.plane_mut(0, s)[..per_slice].fill(1);
        }
        l
    }

    #[test]
    fn area_and_volume_examples() {
        let a = structure_series(&map_with(Task::Aorta, 1, 100), 1, &geom(1.0, 5.0)).unwrap();
        assert_eq!(a.values, vec![100.0]);
        assert_eq!(a.unit, Unit::SquareMm);
        let v = structure_series(&map_with(Task::Sax, 2, 100), 1, &geom(1.0, 10.0)).unwrap();
        assert_eq!(v.values, vec![2.0]);
        assert_eq!(v.unit, Unit::Ml);
        assert!(structure_series(&map_with(Task::Aorta, 1, 4), 3, &geom(1.0, 1.0)).is_err());
    }

    #[test]
    fn spacing_scale_equivariance() {
        let l = map_with(Task::Aorta, 1, 37);
        let a = structure_series(&l, 1, &geom(0.7, 1.0)).unwrap();
        let b = structure_series(&l, 1, &geom(1.4, 1.0)).unwrap();
        assert!((b.values[0] - 4.0 * a.values[0]).abs() < 1e-12);
    }

    fn curve(v: &[f64]) -> PhysioCurve {
        PhysioCurve { structure: 1, values: v.to_vec(), unit: Unit::Ml }
    }

    #[test]
    fn clinical_examples() {
        let lv = curve(&[150.0, 120.0, 64.5, 100.0]);
        let rv = curve(&[160.0, 130.0, 73.6, 120.0]);
        let m = clinical_metrics(&lv, &rv).unwrap();
        assert_eq!(m.lvedv, 150.0);
        assert_eq!(m.lvesv, 64.5);
        assert!((m.lvef - 57.0).abs() < 1e-12);
        assert!((m.rvef - 54.0).abs() < 1e-12);
        assert_eq!((m.ed_frame, m.es_frame), (0, 2));

        let flat = curve(&[80.0; 5]);
        let m = clinical_metrics(&flat, &flat).unwrap();
        assert_eq!(m.lvef, 0.0);
        assert_eq!((m.ed_frame, m.es_frame), (0, 0));

        let zero = curve(&[0.0; 3]);
        assert!(matches!(clinical_metrics(&zero, &curve(&[1.0; 3])), Err(Error::UndefinedEf)));
    }

    #[test]
    fn cyclic_shift_preserves_metrics() {
        let v = [150.0, 140.0, 90.0, 64.5, 80.0, 120.0];
        let base = clinical_metrics(&curve(&v), &curve(&v)).unwrap();
        for k in 1..v.len() {
            let mut s = v.to_vec();
            s.rotate_left(k);
            let m = clinical_metrics(&curve(&s), &curve(&s)).unwrap();
            assert_eq!((m.lvedv, m.lvesv, m.lvef, m.rvef), (base.lvedv, base.lvesv, base.lvef, base.rvef));
        }
    }

    #[test]
    fn qc_input_examples() {
        let lv = curve(&[100.0, 50.0]);
        let rv = curve(&[120.0, 60.0]);
        let x = prepare_qc_input(&[lv, rv], Normalisation::Max).unwrap();
        assert_eq!(x, vec![vec![1.0, 1.0], vec![0.5, 0.5]]);
        let z = prepare_qc_input(&[curve(&[0.0; 4])], Normalisation::Max).unwrap();
        assert!(z.iter().flatten().all(|v| *v == 0.0));
        let aorta = PhysioCurve { structure: 1, values: vec![3.0; 100], unit: Unit::SquareMm };
        let x = prepare_qc_input(&[aorta], Normalisation::Max).unwrap();
        assert_eq!((x.len(), x[0].len()), (100, 1));
        assert!(prepare_qc_input(&[curve(&[1.0]), curve(&[1.0, 2.0])], Normalisation::Max).is_err());
    }

    #[test]
    fn csv_layout() {
        let csv = curves_csv(Task::Sax, &[curve(&[1.5, 2.0])]);
        assert_eq!(csv, "frame,structure,value,unit\n0,lv_blood,1.5,mL\n1,lv_blood,2,mL\n");
    }
}

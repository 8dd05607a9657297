//! Ingestion and validation of three-arm experimental data.
//!
//! A [`Dataset`] holds one row per unit with two mutually exclusive binary
//! treatment indicators, a real-valued mediator and a real-valued outcome.
//! Loading is strict: cells are never coerced, rows with missing fields are
//! rejected rather than dropped, and both indicators set on one row is an
//! error. Arm sizes and within-arm variation are reported by [`validate`]
//! instead of being enforced at load time.

use std::fmt;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{CcmError, Result};

/// Column role in the input table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    T1,
    T2,
    M,
    Y,
}

impl Role {
    pub const ALL: [Role; 4] = [Role::T1, Role::T2, Role::M, Role::Y];
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Role::T1 => "t1",
            Role::T2 => "t2",
            Role::M => "m",
            Role::Y => "y",
        })
    }
}

/// Experimental arm. `Arm1` has `t1 = 1`, `Arm2` has `t2 = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Arm {
    Control,
    Arm1,
    Arm2,
}

impl Arm {
    pub const ALL: [Arm; 3] = [Arm::Control, Arm::Arm1, Arm::Arm2];

    pub fn index(self) -> usize {
        match self {
            Arm::Control => 0,
            Arm::Arm1 => 1,
            Arm::Arm2 => 2,
        }
    }

    /// Treated arm for treatment index `j` (1 or 2).
    pub fn treated(j: TreatmentIndex) -> Arm {
        match j {
            TreatmentIndex::One => Arm::Arm1,
            TreatmentIndex::Two => Arm::Arm2,
        }
    }
}

impl fmt::Display for Arm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Arm::Control => "control",
            Arm::Arm1 => "arm1",
            Arm::Arm2 => "arm2",
        })
    }
}

/// Which of the two treatments an effect refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TreatmentIndex {
    #[serde(rename = "1")]
    One,
    #[serde(rename = "2")]
    Two,
}

impl TreatmentIndex {
    pub const BOTH: [TreatmentIndex; 2] = [TreatmentIndex::One, TreatmentIndex::Two];
}

impl fmt::Display for TreatmentIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TreatmentIndex::One => "1",
            TreatmentIndex::Two => "2",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObservationRow {
    pub t1: bool,
    pub t2: bool,
    pub m: f64,
    pub y: f64,
}

impl ObservationRow {
    /// Builds a row, rejecting `t1 = t2 = 1` and non-finite values.
    pub fn new(t1: bool, t2: bool, m: f64, y: f64) -> Result<Self> {
        if t1 && t2 {
            return Err(CcmError::Exclusivity { row: 0 });
        }
        if !m.is_finite() || !y.is_finite() {
            return Err(CcmError::Input(format!("non-finite value (m = {m}, y = {y})")));
        }
        Ok(Self { t1, t2, m, y })
    }

    /// Row in `arm` without validation of `m` and `y`.
    pub fn in_arm(arm: Arm, m: f64, y: f64) -> Self {
        Self {
            t1: arm == Arm::Arm1,
            t2: arm == Arm::Arm2,
            m,
            y,
        }
    }

    #[inline]
    pub fn arm(&self) -> Arm {
        match (self.t1, self.t2) {
            (true, _) => Arm::Arm1,
            (_, true) => Arm::Arm2,
            _ => Arm::Control,
        }
    }
}

/// Maps each role to the label of the source column holding it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnMapping {
    pub t1: String,
    pub t2: String,
    pub m: String,
    pub y: String,
}

impl Default for ColumnMapping {
    fn default() -> Self {
        Self {
            t1: "t1".into(),
            t2: "t2".into(),
            m: "m".into(),
            y: "y".into(),
        }
    }
}

impl ColumnMapping {
    pub fn column(&self, role: Role) -> &str {
        match role {
            Role::T1 => &self.t1,
            Role::T2 => &self.t2,
            Role::M => &self.m,
            Role::Y => &self.y,
        }
    }
}

/// Immutable table of validated observations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    rows: Vec<ObservationRow>,
    column_names: ColumnMapping,
}

impl Dataset {
    /// Checks exclusivity and finiteness of every row.
    pub fn new(rows: Vec<ObservationRow>, column_names: ColumnMapping) -> Result<Self> {
        for (i, row) in rows.iter().enumerate() {
            if row.t1 && row.t2 {
                return Err(CcmError::Exclusivity { row: i + 1 });
            }
            if !row.m.is_finite() || !row.y.is_finite() {
                return Err(CcmError::Input(format!("non-finite value at row {}", i + 1)));
            }
        }
        Ok(Self { rows, column_names })
    }

    pub fn from_rows(rows: Vec<ObservationRow>) -> Result<Self> {
        Self::new(rows, ColumnMapping::default())
    }

    /// Internal constructor for rows already known to satisfy the invariants
    /// (resamples and simulated draws).
    pub(crate) fn from_trusted(rows: Vec<ObservationRow>, column_names: ColumnMapping) -> Self {
        debug_assert!(rows.iter().all(|r| !(r.t1 && r.t2)));
        Self { rows, column_names }
    }

    pub fn rows(&self) -> &[ObservationRow] {
        &self.rows
    }

    pub fn n(&self) -> usize {
        self.rows.len()
    }

    pub fn column_names(&self) -> &ColumnMapping {
        &self.column_names
    }

    /// Same data with the labels of the two treatment arms exchanged.
    pub fn swap_arms(&self) -> Dataset {
        let rows = self
            .rows
            .iter()
            .map(|r| ObservationRow { t1: r.t2, t2: r.t1, ..*r })
            .collect();
        Dataset::from_trusted(rows, self.column_names.clone())
    }

    /// Applies `f` to every outcome value.
    pub fn map_outcome(&self, f: impl Fn(f64) -> f64) -> Result<Dataset> {
        let rows = self.rows.iter().map(|r| ObservationRow { y: f(r.y), ..*r }).collect();
        Dataset::new(rows, self.column_names.clone())
    }

    /// Applies `f` to every mediator value.
    pub fn map_mediator(&self, f: impl Fn(f64) -> f64) -> Result<Dataset> {
        let rows = self.rows.iter().map(|r| ObservationRow { m: f(r.m), ..*r }).collect();
        Dataset::new(rows, self.column_names.clone())
    }

    pub fn arm_sizes(&self) -> [usize; 3] {
        let mut sizes = [0; 3];
        for r in &self.rows {
            sizes[r.arm().index()] += 1;
        }
        sizes
    }

    /// Writes the dataset as delimited text using the mapped column labels.
    ///
    /// Floats are written in shortest round-trip form, so reloading yields
    /// bit-identical values.
    pub fn write_delimited<W: Write>(&self, writer: W, delimiter: u8) -> Result<()> {
        let mut out = csv::WriterBuilder::new().delimiter(delimiter).from_writer(writer);
        let io = |e: csv::Error| CcmError::Input(e.to_string());
        out.write_record(Role::ALL.iter().map(|&r| self.column_names.column(r)))
            .map_err(io)?;
        for r in &self.rows {
            out.write_record([
                if r.t1 { "1".to_string() } else { "0".to_string() },
                if r.t2 { "1".to_string() } else { "0".to_string() },
                format!("{:?}", r.m),
                format!("{:?}", r.y),
            ])
            .map_err(io)?;
        }
        out.flush().map_err(|e| CcmError::Input(e.to_string()))
    }
}

/// Reads a delimited table with a header row.
///
/// Row numbers in errors are 1-based and count data rows only.
pub fn load_dataset<R: Read>(source: R, schema: &ColumnMapping, delimiter: u8) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .has_headers(true)
        .flexible(false)
        .from_reader(source);

    let headers = reader
        .headers()
        .map_err(|e| CcmError::Input(format!("cannot read header row: {e}")))?
        .clone();
    let mut index = [0usize; 4];
    for (slot, role) in index.iter_mut().zip(Role::ALL) {
        let label = schema.column(role);
        *slot = headers
            .iter()
            .position(|h| h.trim() == label)
            .ok_or_else(|| CcmError::MissingColumn {
                role,
                column: label.to_string(),
            })?;
    }

    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let row_no = i + 1;
        let record = record.map_err(|e| CcmError::Parse {
            row: row_no,
            column: String::new(),
            message: e.to_string(),
        })?;
        let cell = |role: Role| -> Result<&str> {
            let idx = index[role as usize];
            let raw = record.get(idx).unwrap_or("").trim();
            if raw.is_empty() {
                return Err(CcmError::Parse {
                    row: row_no,
                    column: schema.column(role).to_string(),
                    message: "missing value".into(),
                });
            }
            Ok(raw)
        };
        let indicator = |role: Role| -> Result<bool> {
            match cell(role)? {
                "0" => Ok(false),
                "1" => Ok(true),
                other => Err(CcmError::Parse {
                    row: row_no,
                    column: schema.column(role).to_string(),
                    message: format!("expected literal 0 or 1, found `{other}`"),
                }),
            }
        };
        let real = |role: Role| -> Result<f64> {
            let raw = cell(role)?;
            match raw.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                _ => Err(CcmError::Parse {
                    row: row_no,
                    column: schema.column(role).to_string(),
                    message: format!("expected a finite number, found `{raw}`"),
                }),
            }
        };
        let t1 = indicator(Role::T1)?;
        let t2 = indicator(Role::T2)?;
        if t1 && t2 {
            return Err(CcmError::Exclusivity { row: row_no });
        }
        rows.push(ObservationRow {
            t1,
            t2,
            m: real(Role::M)?,
            y: real(Role::Y)?,
        });
    }
    Ok(Dataset::from_trusted(rows, schema.clone()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArmSummary {
    pub arm: Arm,
    pub n_arm: usize,
    /// NaN for an empty arm.
    pub mean_m: f64,
    /// NaN for an empty arm.
    pub mean_y: f64,
    /// Sample variance with divisor `n_arm - 1`; zero for a single row.
    pub var_m: f64,
}

/// Per-arm means and mediator variances, in the order control, arm 1, arm 2.
pub fn arm_partition(d: &Dataset) -> [ArmSummary; 3] {
    arm_partition_rows(d.rows())
}

pub(crate) fn arm_partition_rows(rows: &[ObservationRow]) -> [ArmSummary; 3] {
    let mut n = [0usize; 3];
    let mut sum_m = [0.0; 3];
    let mut sum_y = [0.0; 3];
    for r in rows {
        let a = r.arm().index();
        n[a] += 1;
        sum_m[a] += r.m;
        sum_y[a] += r.y;
    }
    let mean_m: [f64; 3] = std::array::from_fn(|a| sum_m[a] / n[a] as f64);
    let mean_y: [f64; 3] = std::array::from_fn(|a| sum_y[a] / n[a] as f64);
    let mut ss = [0.0; 3];
    for r in rows {
        let a = r.arm().index();
        let dm = r.m - mean_m[a];
        ss[a] += dm * dm;
    }
    std::array::from_fn(|a| ArmSummary {
        arm: Arm::ALL[a],
        n_arm: n[a],
        mean_m: mean_m[a],
        mean_y: mean_y[a],
        var_m: match n[a] {
            0 => f64::NAN,
            1 => 0.0,
            k => ss[a] / (k - 1) as f64,
        },
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "flag", rename_all = "snake_case")]
pub enum ValidationFlag {
    /// Fewer than two rows in the arm.
    ArmUnderpopulated { arm: Arm, n_arm: usize },
    /// The mediator does not vary within the arm; within-arm slopes and the
    /// conservatism diagnostic are unavailable.
    ZeroMediatorVariance { arm: Arm },
    /// The outcome is identical on every row.
    ConstantOutcome,
}

impl fmt::Display for ValidationFlag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ValidationFlag::ArmUnderpopulated { arm, n_arm } => {
                write!(f, "arm {arm} underpopulated ({n_arm} rows, need at least 2)")
            }
            ValidationFlag::ZeroMediatorVariance { arm } => {
                write!(f, "arm {arm} has zero mediator variance")
            }
            ValidationFlag::ConstantOutcome => f.write_str("outcome is constant"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    /// Control, arm 1, arm 2.
    pub arm_sizes: [usize; 3],
    pub flags: Vec<ValidationFlag>,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.flags.is_empty()
    }
}

pub fn validate(d: &Dataset) -> ValidationReport {
    let arms = arm_partition(d);
    let mut flags = Vec::new();
    for s in &arms {
        if s.n_arm < 2 {
            flags.push(ValidationFlag::ArmUnderpopulated {
                arm: s.arm,
                n_arm: s.n_arm,
            });
        }
    }
    for s in &arms {
        if s.n_arm >= 2 && s.var_m == 0.0 {
            flags.push(ValidationFlag::ZeroMediatorVariance { arm: s.arm });
        }
    }
    if let Some(first) = d.rows().first() {
        if d.rows().iter().all(|r| r.y == first.y) {
            flags.push(ValidationFlag::ConstantOutcome);
        }
    }
    ValidationReport {
        arm_sizes: arms.map(|s| s.n_arm),
        flags,
    }
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;

    /// Nine rows, three per arm; arm 2 has a constant mediator.
    pub const F1_CSV: &str = "t1,t2,m,y\n\
        0,0,0,0\n0,0,0,0\n0,0,1,1\n\
        1,0,1,1\n1,0,0,0\n1,0,1,1\n\
        0,1,1,1\n0,1,1,1\n0,1,1,0\n";

    /// Within-arm slopes 1 (control and arm 1) and 2 (arm 2).
    pub const F2_CSV: &str = "t1,t2,m,y\n\
        0,0,0,0\n0,0,1,1\n0,0,2,2\n\
        1,0,0,0\n1,0,1,1\n1,0,2,2\n\
        0,1,0,0\n0,1,1,2\n0,1,2,4\n";

    pub fn f1() -> Dataset {
        load_dataset(F1_CSV.as_bytes(), &ColumnMapping::default(), b',').unwrap()
    }

    pub fn f2() -> Dataset {
        load_dataset(F2_CSV.as_bytes(), &ColumnMapping::default(), b',').unwrap()
    }

    /// Every contrast, slope and total effect nonzero and distinct.
    pub fn generic() -> Dataset {
        let rows = [
            (Arm::Control, 0.0, 0.0),
            (Arm::Control, 1.0, 1.0),
            (Arm::Control, 2.0, 3.0),
            (Arm::Arm1, 1.0, 1.0),
            (Arm::Arm1, 2.0, 3.0),
            (Arm::Arm1, 4.0, 6.0),
            (Arm::Arm2, 2.0, 3.0),
            (Arm::Arm2, 4.0, 7.0),
            (Arm::Arm2, 5.0, 9.0),
        ];
        Dataset::from_rows(rows.iter().map(|&(a, m, y)| ObservationRow::in_arm(a, m, y)).collect())
            .unwrap()
    }
}

#[cfg(test)]
mod tests {
    use super::fixtures::*;
    use super::*;
    use proptest::prelude::*;

    fn load(text: &str) -> Result<Dataset> {
        load_dataset(text.as_bytes(), &ColumnMapping::default(), b',')
    }

    #[test]
    fn loads_f1() {
        let d = f1();
        assert_eq!(d.n(), 9);
        assert_eq!(d.arm_sizes(), [3, 3, 3]);
        assert_eq!(d.rows()[2], ObservationRow::in_arm(Arm::Control, 1.0, 1.0));
    }

    #[test]
    fn both_treatments_is_exclusivity_violation() {
        let err = load("t1,t2,m,y\n0,0,0,0\n1,1,0,1\n").unwrap_err();
        assert_eq!(err, CcmError::Exclusivity { row: 2 });
    }

    #[test]
    fn na_cell_is_parse_error_with_position() {
        let err = load("t1,t2,m,y\n0,0,0,0\n1,0,NA,1\n").unwrap_err();
        match err {
            CcmError::Parse { row, column, .. } => {
                assert_eq!(row, 2);
                assert_eq!(column, "m");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn missing_cell_rejected() {
        let err = load("t1,t2,m,y\n0,0,,0\n").unwrap_err();
        assert!(matches!(err, CcmError::Parse { row: 1, .. }));
    }

    #[test]
    fn truthy_indicator_rejected() {
        let err = load("t1,t2,m,y\ntrue,0,0,0\n").unwrap_err();
        assert!(matches!(err, CcmError::Parse { ref column, .. } if column == "t1"));
        let err = load("t1,t2,m,y\n1.0,0,0,0\n").unwrap_err();
        assert!(matches!(err, CcmError::Parse { .. }));
    }

    #[test]
    fn missing_column_names_role() {
        let err = load("t1,t2,mediator,y\n0,0,0,0\n").unwrap_err();
        assert_eq!(
            err,
            CcmError::MissingColumn {
                role: Role::M,
                column: "m".into()
            }
        );
    }

    #[test]
    fn custom_mapping_and_tab_delimiter() {
        let schema = ColumnMapping {
            t1: "informal".into(),
            t2: "legal".into(),
            m: "immoral".into(),
            y: "disapprove".into(),
        };
        let text = "id\tinformal\tlegal\timmoral\tdisapprove\n7\t0\t1\t0.5\t1\n";
        let d = load_dataset(text.as_bytes(), &schema, b'\t').unwrap();
        assert_eq!(d.rows()[0], ObservationRow::in_arm(Arm::Arm2, 0.5, 1.0));
    }

    #[test]
    fn non_finite_rejected() {
        assert!(load("t1,t2,m,y\n0,0,inf,0\n").is_err());
        assert!(load("t1,t2,m,y\n0,0,0,NaN\n").is_err());
    }

    #[test]
    fn f1_arm_summaries() {
        let [c, a1, a2] = arm_partition(&f1());
        let third = 1.0 / 3.0;
        assert!((c.mean_m - third).abs() < 1e-15);
        assert!((c.mean_y - third).abs() < 1e-15);
        assert!((c.var_m - third).abs() < 1e-15);
        assert!((a1.mean_m - 2.0 * third).abs() < 1e-15);
        assert!((a1.mean_y - 2.0 * third).abs() < 1e-15);
        assert!((a1.var_m - third).abs() < 1e-15);
        assert_eq!(a2.mean_m, 1.0);
        assert!((a2.mean_y - 2.0 * third).abs() < 1e-15);
        assert_eq!(a2.var_m, 0.0);
    }

    #[test]
    fn f1_validation_flags_arm2_variance() {
        let report = validate(&f1());
        assert_eq!(report.arm_sizes, [3, 3, 3]);
        assert_eq!(
            report.flags,
            vec![ValidationFlag::ZeroMediatorVariance { arm: Arm::Arm2 }]
        );
    }

    #[test]
    fn empty_control_flagged() {
        let d = load("t1,t2,m,y\n1,0,0,0\n1,0,1,1\n0,1,0,1\n0,1,1,0\n").unwrap();
        let report = validate(&d);
        assert!(report.flags.contains(&ValidationFlag::ArmUnderpopulated {
            arm: Arm::Control,
            n_arm: 0
        }));
        assert_eq!(report.flags[0].to_string(), "arm control underpopulated (0 rows, need at least 2)");
    }

    #[test]
    fn identical_rows_flag_mediator_and_outcome() {
        let d = load("t1,t2,m,y\n0,0,1,2\n0,0,1,2\n0,0,1,2\n").unwrap();
        let report = validate(&d);
        assert!(report
            .flags
            .contains(&ValidationFlag::ZeroMediatorVariance { arm: Arm::Control }));
        assert!(report.flags.contains(&ValidationFlag::ConstantOutcome));
    }

    fn arb_row() -> impl Strategy<Value = ObservationRow> {
        (0u8..3, -1e6f64..1e6, prop_oneof![Just(0.0f64), Just(1.0), -1e300f64..1e300])
            .prop_map(|(a, m, y)| ObservationRow::in_arm(Arm::ALL[a as usize], m, y))
    }

    proptest! {
        #[test]
        fn write_then_load_is_bit_exact(rows in prop::collection::vec(arb_row(), 0..40)) {
            let d = Dataset::from_rows(rows).unwrap();
            let mut buf = Vec::new();
            d.write_delimited(&mut buf, b',').unwrap();
            let back = load_dataset(buf.as_slice(), &ColumnMapping::default(), b',').unwrap();
            prop_assert_eq!(d.n(), back.n());
            for (a, b) in d.rows().iter().zip(back.rows()) {
                prop_assert_eq!(a.m.to_bits(), b.m.to_bits());
                prop_assert_eq!(a.y.to_bits(), b.y.to_bits());
                prop_assert_eq!(a.arm(), b.arm());
            }
        }

        #[test]
        fn arm_sizes_sum_to_n(rows in prop::collection::vec(arb_row(), 0..60)) {
            let d = Dataset::from_rows(rows).unwrap();
            let total: usize = arm_partition(&d).iter().map(|s| s.n_arm).sum();
            prop_assert_eq!(total, d.n());
        }
    }
}

//! Tabular and JSON views of results, with fixed 17-significant-digit number
//! formatting so identical runs produce identical bytes.

use std::io;

use serde::Serialize;

use crate::atlas::{BifurcationPoint, ModeBranch, PeriodDiagram, RegionGrid};
use crate::map::{fixed_point, spectrum, x_h, FixedPoint};
use crate::sim::{Event, Sample};
use crate::torus::TorusSlice;

pub const SCHEMA_VERSION: u32 = 1;

/// Header shared by every branch-like table.
pub const BRANCH_HEADER: [&str; 9] = ["kind", "nu", "Q", "Omega", "Tstar", "invP", "xH", "unstable_count", "marker"];

/// `v` with 17 significant digits in scientific notation.
pub fn fmt_f64(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        // NaN / inf keep their Rust spelling
        format!("{v}")
    }
}

pub fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

fn fmt_count(v: Option<usize>) -> String {
    v.map(|c| c.to_string()).unwrap_or_default()
}

/// A header plus rows of already formatted cells.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Table { header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn extend(&mut self, other: Table) {
        debug_assert_eq!(self.header, other.header);
        self.rows.extend(other.rows);
    }
}

fn branch_row(kind: &str, nu: usize, q: f64, omega: f64, fp: Option<&FixedPoint>, unstable: Option<usize>, marker: &str) -> Vec<String> {
    vec![
        kind.to_string(),
        nu.to_string(),
        fmt_f64(q),
        fmt_f64(omega),
        fmt_opt(fp.map(|f| f.t_star)),
        fmt_opt(fp.map(|f| f.inv_period())),
        fmt_opt(fp.map(x_h)),
        fmt_count(unstable),
        marker.to_string(),
    ]
}

/// One `fixedpoint` row with its spectrum, if it has one.
pub fn fixed_point_table(fp: &FixedPoint) -> Table {
    let mut t = Table::new(&BRANCH_HEADER);
    let unstable = spectrum(fp).ok().map(|s| s.unstable_count);
    let marker = if fp.is_valid() { "" } else { "invalid" };
    t.push(branch_row("fixedpoint", fp.nu, fp.params.q(), fp.params.omega(), Some(fp), unstable, marker));
    t
}

/// Bifurcation rows; the orbit columns are filled from the fixed point at
/// the point when it can be found.
pub fn bifurcation_table(points: &[BifurcationPoint]) -> Table {
    let mut t = Table::new(&BRANCH_HEADER);
    for b in points {
        let fp = crate::Parameters::new(b.q, b.omega, b.sigma).ok().and_then(|p| fixed_point(b.nu, &p).ok());
        t.push(branch_row("bifurcation", b.nu, b.q, b.omega, fp.as_ref(), b.unstable_after, b.kind.name()));
    }
    t
}

pub fn period_diagram_table(d: &PeriodDiagram) -> Table {
    let mut t = Table::new(&BRANCH_HEADER);
    for s in &d.samples {
        t.push(vec![
            "sample".to_string(),
            s.nu.to_string(),
            fmt_f64(d.q),
            fmt_f64(s.omega),
            fmt_f64(s.t_star),
            fmt_f64(s.inv_period),
            fmt_f64(s.x_h),
            fmt_count(s.unstable_count),
            String::new(),
        ]);
    }
    t.extend(bifurcation_table(&d.markers));
    t
}

pub fn mode_branch_table(m: &ModeBranch) -> Table {
    let mut t = Table::new(&BRANCH_HEADER);
    for s in &m.samples {
        t.push(branch_row("sample", s.fp.nu, m.q, s.omega, Some(&s.fp), s.unstable_count(), ""));
    }
    let mut marks = m.relabels.clone();
    marks.extend(m.ns_points());
    marks.extend(m.end_point);
    marks.sort_by(|a, b| a.omega.total_cmp(&b.omega));
    t.extend(bifurcation_table(&marks));
    t
}

pub fn region_table(g: &RegionGrid) -> Table {
    let mut t = Table::new(&["nu", "Q", "Omega", "exists", "stable", "unstable_count"]);
    for (k, nu) in g.nus.iter().enumerate() {
        for (i, q) in g.q.iter().enumerate() {
            for (j, om) in g.omega.iter().enumerate() {
                let c = &g.cells[k][i][j];
                t.push(vec![
                    nu.to_string(),
                    fmt_f64(*q),
                    fmt_f64(*om),
                    (c.exists as u8).to_string(),
                    (c.stable as u8).to_string(),
                    fmt_count(c.unstable_count),
                ]);
            }
        }
    }
    t
}

pub fn torus_table(q: f64, slices: &[TorusSlice]) -> Table {
    let mut t = Table::new(&["Q", "Omega", "index", "xH", "yH", "tag", "label"]);
    for s in slices {
        let tag = format!("{:?}", s.tag);
        let label = s.label.clone().unwrap_or_default();
        for (i, h) in s.section.iter().enumerate() {
            t.push(vec![fmt_f64(q), fmt_f64(s.omega), i.to_string(), fmt_f64(h.x), fmt_f64(h.y), tag.clone(), label.clone()]);
        }
    }
    t
}

pub fn events_table(events: &[Event]) -> Table {
    let mut t = Table::new(&["index", "kind", "t", "x", "y"]);
    for (i, e) in events.iter().enumerate() {
        t.push(vec![i.to_string(), e.kind.symbol().to_string(), fmt_f64(e.time), fmt_f64(e.x), fmt_f64(e.y)]);
    }
    t
}

pub fn samples_table(samples: &[Sample]) -> Table {
    let mut t = Table::new(&["t", "x", "y"]);
    for s in samples {
        t.push(vec![fmt_f64(s.t), fmt_f64(s.x), fmt_f64(s.y)]);
    }
    t
}

/// serde_json formatter writing every float with [`fmt_f64`].
#[derive(Debug, Clone, Copy, Default)]
pub struct FixedDigits;

impl serde_json::ser::Formatter for FixedDigits {
    fn write_f64<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        writer.write_all(fmt_f64(value).as_bytes())
    }

    fn write_f32<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(writer, value as f64)
    }
}

#[derive(Serialize)]
struct Record<'a, T: Serialize> {
    schema_version: u32,
    record: &'a str,
    #[serde(flatten)]
    data: &'a T,
}

/// One JSON object: `{"schema_version": .., "record": kind, ..fields of value}`.
/// `value` must serialize as a map or struct.
pub fn json_record<T: Serialize>(kind: &str, value: &T) -> serde_json::Result<String> {
    let mut out = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut out, FixedDigits);
    Record { schema_version: SCHEMA_VERSION, record: kind, data: value }.serialize(&mut ser)?;
    Ok(String::from_utf8(out).expect("serde_json writes UTF-8"))
}

/// JSON lines, one record per value.
pub fn json_lines<T: Serialize>(kind: &str, values: &[T]) -> serde_json::Result<String> {
    let mut out = String::new();
    for v in values {
        out.push_str(&json_record(kind, v)?);
        out.push('\n');
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::atlas::BifurcationKind;
    use crate::Sign;

    #[test]
    fn seventeen_digits_round_trip() {
        for v in [0.1, 1.0 / 3.0, -2.5e-300, 14.783795893494192, 6.02e23, 0.0] {
            let s = fmt_f64(v);
            assert_eq!(s.parse::<f64>().unwrap(), v, "{s}");
            let mantissa = s.split('e').next().unwrap().trim_start_matches('-').replace('.', "");
            assert_eq!(mantissa.len(), 17, "{s}");
        }
        assert_eq!(fmt_f64(f64::NAN), "NaN");
        assert_eq!(fmt_opt(None), "");
    }

    #[test]
    fn json_records_carry_schema_version() {
        let b = BifurcationPoint {
            kind: BifurcationKind::NS,
            q: 1.5,
            omega: 0.1,
            nu: 3,
            sigma: Sign::Minus,
            phi: Some(1.0 / 3.0),
            residual: 0.0,
            unstable_after: Some(2),
        };
        let s = json_record("bifurcation", &b).unwrap();
        let v: serde_json::Value = serde_json::from_str(&s).unwrap();
        assert_eq!(v["schema_version"], SCHEMA_VERSION);
        assert_eq!(v["record"], "bifurcation");
        assert_eq!(v["omega"].as_f64().unwrap(), 0.1);
        assert!(s.contains("1.0000000000000001e-1"), "{s}");
        let lines = json_lines("bifurcation", &[b, b]).unwrap();
        assert_eq!(lines.lines().count(), 2);
        assert!(lines.lines().all(|l| serde_json::from_str::<serde_json::Value>(l).is_ok()));
        assert_eq!(json_lines::<BifurcationPoint>("x", &[]).unwrap(), "");
    }

    #[test]
    fn fixed_point_row_matches_header() {
        let p = crate::Parameters::with_sigma(1.5, 10.5, -1).unwrap();
        let fp = fixed_point(3, &p).unwrap();
        let t = fixed_point_table(&fp);
        assert_eq!(t.header, BRANCH_HEADER);
        assert_eq!(t.rows.len(), 1);
        assert_eq!(t.rows[0][0], "fixedpoint");
        assert_eq!(t.rows[0][7], "0");
        assert_eq!(t.rows[0][4].parse::<f64>().unwrap(), fp.t_star);
    }
}

use std::collections::BTreeMap;
use std::fmt::Write;

use serde::{Deserialize, Serialize};

use crate::corpus::StanceLabel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LeaningGroup {
    Progressive,
    Moderate,
    Conservative,
    Unknown,
}

impl LeaningGroup {
    pub fn as_str(self) -> &'static str {
        match self {
            LeaningGroup::Progressive => "progressive",
            LeaningGroup::Moderate => "moderate",
            LeaningGroup::Conservative => "conservative",
            LeaningGroup::Unknown => "unknown",
        }
    }
}

/// Outlet name → leaning group, as read from a JSON object.
pub type OutletMeta = BTreeMap<String, LeaningGroup>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasRow {
    pub outlet: String,
    pub issue_id: String,
    pub group: LeaningGroup,
    pub frac_supportive: f64,
    pub frac_oppositional: f64,
    pub n: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BiasReport {
    pub rows: Vec<BiasRow>,
}

/// Per (outlet, issue) fractions of predicted supportive and oppositional
/// labels. `predictions` holds `(outlet, issue_id, label)`; when `issues` is
/// non-empty only those issues are reported. Outlets absent from `outlets`
/// are grouped as unknown.
pub fn bias_report(predictions: &[(String, String, StanceLabel)], outlets: &OutletMeta, issues: &[String]) -> BiasReport {
    let mut cells: BTreeMap<(&str, &str), [usize; 3]> = BTreeMap::new();
    for (outlet, issue, label) in predictions {
        if !issues.is_empty() && !issues.contains(issue) {
            continue;
        }
        cells.entry((outlet.as_str(), issue.as_str())).or_default()[label.index()] += 1;
    }
    let rows = cells
        .into_iter()
        .map(|((outlet, issue), c)| {
            let n: usize = c.iter().sum();
            BiasRow {
                outlet: outlet.into(),
                issue_id: issue.into(),
                group: outlets.get(outlet).copied().unwrap_or(LeaningGroup::Unknown),
                frac_supportive: c[StanceLabel::Supportive.index()] as f64 / n as f64,
                frac_oppositional: c[StanceLabel::Oppositional.index()] as f64 / n as f64,
                n,
            }
        })
        .collect();
    BiasReport { rows }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

impl BiasReport {
    /// Columns: `outlet,issue_id,group,frac_supportive,frac_oppositional,n`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("outlet,issue_id,group,frac_supportive,frac_oppositional,n\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                csv_field(&r.outlet),
                csv_field(&r.issue_id),
                r.group.as_str(),
                r.frac_supportive,
                r.frac_oppositional,
                r.n
            );
        }
        out
    }

    /// Scatter of supportive fraction (x) against oppositional fraction (y),
    /// one point per row, marker shape by leaning group.
    pub fn to_svg(&self) -> String {
        const SIZE: f64 = 400.0;
        const MARGIN: f64 = 50.0;
        let total = SIZE + 2.0 * MARGIN;
        let x = |v: f64| MARGIN + v * SIZE;
        let y = |v: f64| MARGIN + (1.0 - v) * SIZE;
        let marker = |group: LeaningGroup, cx: f64, cy: f64| match group {
            LeaningGroup::Progressive => format!(r#"<circle cx="{cx:.1}" cy="{cy:.1}" r="5" fill="steelblue"/>"#),
            LeaningGroup::Moderate => format!(
                r#"<rect x="{:.1}" y="{:.1}" width="10" height="10" fill="seagreen"/>"#,
                cx - 5.0,
                cy - 5.0
            ),
            LeaningGroup::Conservative => format!(
                r#"<polygon points="{:.1},{:.1} {:.1},{:.1} {:.1},{:.1}" fill="firebrick"/>"#,
                cx,
                cy - 6.0,
                cx - 6.0,
                cy + 5.0,
                cx + 6.0,
                cy + 5.0
            ),
            LeaningGroup::Unknown => format!(
                r#"<path d="M{:.1},{:.1} L{:.1},{:.1} M{:.1},{:.1} L{:.1},{:.1}" stroke="gray" stroke-width="2"/>"#,
                cx - 5.0,
                cy - 5.0,
                cx + 5.0,
                cy + 5.0,
                cx - 5.0,
                cy + 5.0,
                cx + 5.0,
                cy - 5.0
            ),
        };
        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{total}" height="{total}" viewBox="0 0 {total} {total}">"#
        );
        let _ = writeln!(s, r#"<rect width="{total}" height="{total}" fill="white"/>"#);
        let _ = writeln!(
            s,
            r#"<line x1="{0}" y1="{1}" x2="{1}" y2="{1}" stroke="black"/><line x1="{0}" y1="{0}" x2="{0}" y2="{1}" stroke="black"/>"#,
            MARGIN,
            MARGIN + SIZE
        );
        for t in 0..=4 {
            let v = t as f64 / 4.0;
            let _ = writeln!(
                s,
                r#"<text x="{:.1}" y="{:.1}" font-size="10" text-anchor="middle">{v}</text><text x="{:.1}" y="{:.1}" font-size="10" text-anchor="end">{v}</text>"#,
                x(v),
                MARGIN + SIZE + 15.0,
                MARGIN - 5.0,
                y(v) + 3.0
            );
        }
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" font-size="12" text-anchor="middle">supportive fraction</text>"#,
            MARGIN + SIZE / 2.0,
            total - 10.0
        );
        let _ = writeln!(
            s,
            r#"<text x="15" y="{:.1}" font-size="12" text-anchor="middle" transform="rotate(-90 15 {:.1})">oppositional fraction</text>"#,
            MARGIN + SIZE / 2.0,
            MARGIN + SIZE / 2.0
        );
        for r in &self.rows {
            let (cx, cy) = (x(r.frac_supportive), y(r.frac_oppositional));
            let _ = writeln!(
                s,
                "<g><title>{} ({}): n={}</title>{}</g>",
                xml_escape(&r.outlet),
                xml_escape(&r.issue_id),
                r.n,
                marker(r.group, cx, cy)
            );
        }
        let groups = [
            LeaningGroup::Progressive,
            LeaningGroup::Moderate,
            LeaningGroup::Conservative,
            LeaningGroup::Unknown,
        ];
        for (i, g) in groups.into_iter().enumerate() {
            let ly = MARGIN + 10.0 + 18.0 * i as f64;
            let lx = MARGIN + SIZE - 90.0;
            let _ = writeln!(
                s,
                r#"{}<text x="{:.1}" y="{:.1}" font-size="11">{}</text>"#,
                marker(g, lx, ly),
                lx + 12.0,
                ly + 4.0,
                g.as_str()
            );
        }
        s.push_str("</svg>\n");
        s
    }
}

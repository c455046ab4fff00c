//! SVG maps of two-parameter verdicts.

use std::fmt::Write;
use std::fs;
use std::path::Path;

use attverify_core::{AttentionVerdict, ClassVerdict};

use crate::error::{CliError, Result};
use crate::results::ResultsDocument;

const SIZE: f64 = 480.0;
const MARGIN: f64 = 56.0;

const GREEN: &str = "#4caf50";
const AMBER: &str = "#ffb300";
const RED: &str = "#e53935";
const PURPLE: &str = "#8e24aa";
const GRAY: &str = "#9e9e9e";
const BLUE: &str = "#1e63d6";

/// Fill and stroke of a region. CB regions get a blue outline on top of
/// their fill.
pub fn region_style(cls: ClassVerdict, attn: AttentionVerdict) -> (&'static str, &'static str) {
    use AttentionVerdict::*;
    use ClassVerdict::*;
    let fill = match (cls, attn) {
        (Mr, _) => RED,
        (_, Ir) => PURPLE,
        (Cr, Ar) => GREEN,
        (Cr, Ab) | (Cb, Ar) => AMBER,
        (Cb, Ab) => GRAY,
    };
    let stroke = if cls == Cb { BLUE } else { "#333333" };
    (fill, stroke)
}

struct Frame {
    lo: [f64; 2],
    hi: [f64; 2],
}

impl Frame {
    fn x(&self, v: f64) -> f64 {
        let span = self.hi[0] - self.lo[0];
        MARGIN + if span > 0.0 { (v - self.lo[0]) / span } else { 0.5 } * (SIZE - 2.0 * MARGIN)
    }

    fn y(&self, v: f64) -> f64 {
        let span = self.hi[1] - self.lo[1];
        SIZE - MARGIN - if span > 0.0 { (v - self.lo[1]) / span } else { 0.5 } * (SIZE - 2.0 * MARGIN)
    }
}

/// Renders one polygon per region; degenerate regions are skipped.
pub fn render_svg(doc: &ResultsDocument) -> Result<String> {
    if doc.dim() != 2 {
        return Err(CliError::Render(format!(
            "need exactly 2 perturbation parameters, got {}",
            doc.dim()
        )));
    }
    let p = &doc.problem;
    let frame = Frame {
        lo: [p.theta_lo[0], p.theta_lo[1]],
        hi: [p.theta_hi[0], p.theta_hi[1]],
    };
    let mut s = String::new();
    writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SIZE}" height="{SIZE}" viewBox="0 0 {SIZE} {SIZE}">"#
    )
    .unwrap();
    writeln!(s, r#"<rect width="{SIZE}" height="{SIZE}" fill="white"/>"#).unwrap();

    writeln!(s, r#"<g class="regions">"#).unwrap();
    for (i, (rec, poly)) in doc.regions.iter().zip(doc.polytopes()?).enumerate() {
        let verts = poly.vertices_2d()?;
        if verts.len() <= 2 {
            tracing::warn!("region {i} has {} vertices; not drawn", verts.len());
            continue;
        }
        let pts: Vec<String> = verts
            .iter()
            .map(|v| format!("{:.3},{:.3}", frame.x(v[0]), frame.y(v[1])))
            .collect();
        let (fill, stroke) = region_style(rec.cls_verdict, rec.attn_verdict);
        let width = if rec.cls_verdict == ClassVerdict::Cb { 1.5 } else { 0.5 };
        writeln!(
            s,
            r#"<polygon points="{}" fill="{fill}" stroke="{stroke}" stroke-width="{width}"><title>{} {}/{}</title></polygon>"#,
            pts.join(" "),
            i,
            rec.cls_verdict,
            rec.attn_verdict
        )
        .unwrap();
    }
    writeln!(s, "</g>").unwrap();

    let (x0, x1) = (frame.x(frame.lo[0]), frame.x(frame.hi[0]));
    let (y0, y1) = (frame.y(frame.lo[1]), frame.y(frame.hi[1]));
    writeln!(s, r#"<g class="axes" stroke="black" stroke-width="1">"#).unwrap();
    writeln!(s, r#"<line x1="{x0:.3}" y1="{y0:.3}" x2="{x1:.3}" y2="{y0:.3}"/>"#).unwrap();
    writeln!(s, r#"<line x1="{x0:.3}" y1="{y0:.3}" x2="{x0:.3}" y2="{y1:.3}"/>"#).unwrap();
    writeln!(s, "</g>").unwrap();
    writeln!(s, r#"<g class="labels" font-family="sans-serif" font-size="12">"#).unwrap();
    let mid_x = (x0 + x1) / 2.0;
    let mid_y = (y0 + y1) / 2.0;
    writeln!(
        s,
        r#"<text x="{mid_x:.3}" y="{:.3}" text-anchor="middle">{}</text>"#,
        y0 + 36.0,
        p.parameters[0]
    )
    .unwrap();
    writeln!(
        s,
        r#"<text x="{:.3}" y="{mid_y:.3}" text-anchor="middle" transform="rotate(-90 {:.3} {mid_y:.3})">{}</text>"#,
        x0 - 36.0,
        x0 - 36.0,
        p.parameters[1]
    )
    .unwrap();
    for (v, x) in [(frame.lo[0], x0), (frame.hi[0], x1)] {
        writeln!(s, r#"<text x="{x:.3}" y="{:.3}" text-anchor="middle">{v}</text>"#, y0 + 16.0).unwrap();
    }
    for (v, y) in [(frame.lo[1], y0), (frame.hi[1], y1)] {
        writeln!(s, r#"<text x="{:.3}" y="{y:.3}" text-anchor="end">{v}</text>"#, x0 - 6.0).unwrap();
    }
    writeln!(s, "</g>").unwrap();
    writeln!(
        s,
        r#"<circle class="origin" cx="{:.3}" cy="{:.3}" r="4" fill="black"/>"#,
        frame.x(0.0),
        frame.y(0.0)
    )
    .unwrap();
    s.push_str("</svg>\n");
    Ok(s)
}

pub fn write_svg(doc: &ResultsDocument, path: &Path) -> Result<()> {
    let svg = render_svg(doc)?;
    fs::write(path, svg).map_err(|e| CliError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn styles() {
        use AttentionVerdict::*;
        use ClassVerdict::*;
        assert_eq!(region_style(Cr, Ar).0, GREEN);
        assert_eq!(region_style(Cr, Ab).0, AMBER);
        assert_eq!(region_style(Cb, Ar), (AMBER, BLUE));
        assert_eq!(region_style(Mr, Ar).0, RED);
        assert_eq!(region_style(Cr, Ir).0, PURPLE);
        assert_eq!(region_style(Cb, Ab), (GRAY, BLUE));
    }
}

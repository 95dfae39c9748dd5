//! Side-by-side plan reports: one color-coded panel per step for the subgoal
//! plan and the naive baseline, movement labels and the similarity curve.

use std::fmt::Write as _;
use std::io::Cursor;
use std::path::Path;

use image::{ImageFormat, Rgb, RgbImage};
use thiserror::Error;

use crate::cases::QuestionCase;
use crate::planner::{PlanStep, SubgoalPlan};
use crate::slicer::{slice, SegMap, SliceGeometry};
use crate::structure::{StructureId, LABEL_COUNT};
use crate::volume::LabeledVolume;

/// Display colors indexed by label id.
pub const PALETTE: [[u8; 3]; LABEL_COUNT] = [
    [0, 0, 0],
    [214, 39, 40],
    [255, 127, 14],
    [31, 119, 180],
    [44, 160, 44],
    [148, 103, 189],
    [227, 119, 194],
    [23, 190, 207],
    [188, 189, 34],
    [140, 86, 75],
];

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("image encoding failed: {0}")]
    Image(#[from] image::ImageError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub fn render_segmap(map: &SegMap) -> RgbImage {
    RgbImage::from_fn(map.width() as u32, map.height() as u32, |u, v| {
        Rgb(PALETTE[map.label(u as usize, v as usize) as usize])
    })
}

pub fn encode_png(img: &RgbImage) -> Result<Vec<u8>, ReportError> {
    let mut buf = Cursor::new(Vec::new());
    img.write_to(&mut buf, ImageFormat::Png)?;
    Ok(buf.into_inner())
}

pub fn movement_label(step: &PlanStep) -> String {
    let m = step.movement;
    if m.kind.is_rotation() {
        format!("{} {:+.1}°", m.kind, m.amount.to_degrees())
    } else {
        format!("{} {:+.3}", m.kind, m.amount)
    }
}

#[derive(Debug, Clone)]
pub struct Panel {
    pub file: String,
    pub caption: String,
    pub similarity: f64,
    pub png: Vec<u8>,
}

#[derive(Debug, Clone)]
pub struct Report {
    pub case_id: String,
    pub target: Panel,
    /// Start view followed by one panel per subgoal step.
    pub plan_panels: Vec<Panel>,
    /// Start view followed by the six naive steps.
    pub naive_panels: Vec<Panel>,
    pub html: String,
}

fn panels(prefix: &str, plan: &SubgoalPlan, start_view: &SegMap) -> Result<Vec<Panel>, ReportError> {
    let mut out = vec![Panel {
        file: format!("{prefix}-00.png"),
        caption: "start".into(),
        similarity: plan.start_similarity,
        png: encode_png(&render_segmap(start_view))?,
    }];
    for (i, s) in plan.steps.iter().enumerate() {
        let mut caption = movement_label(s);
        if let Some(f) = &s.via_familiar {
            let _ = write!(caption, " (via {f})");
        }
        out.push(Panel {
            file: format!("{prefix}-{:02}.png", i + 1),
            caption,
            similarity: s.similarity_to_target,
            png: encode_png(&render_segmap(&s.view))?,
        });
    }
    Ok(out)
}

/// Inline SVG polyline of the similarity curve on a 0..12 axis.
pub fn curve_svg(values: &[f64], max: f64) -> String {
    let (w, h, pad) = (360.0, 160.0, 20.0);
    let n = values.len().max(2) - 1;
    let pts: Vec<String> = values
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let x = pad + (w - 2.0 * pad) * i as f64 / n as f64;
            let y = h - pad - (h - 2.0 * pad) * (v / max).clamp(0.0, 1.0);
            format!("{x:.1},{y:.1}")
        })
        .collect();
    format!(
        "<svg class=\"curve\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\
         <rect x=\"0\" y=\"0\" width=\"{w}\" height=\"{h}\" fill=\"white\" stroke=\"#ccc\"/>\
         <polyline fill=\"none\" stroke=\"#1f77b4\" stroke-width=\"2\" points=\"{}\"/></svg>",
        pts.join(" ")
    )
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn panel_row(html: &mut String, class: &str, title: &str, panels: &[Panel]) {
    let _ = write!(html, "<h2>{}</h2><div class=\"row\">", escape(title));
    for p in panels {
        let _ = write!(
            html,
            "<figure class=\"panel {class}\"><img src=\"{}\"><figcaption>{}<br>sim {:.3}</figcaption></figure>",
            p.file,
            escape(&p.caption),
            p.similarity
        );
    }
    html.push_str("</div>");
}

fn legend() -> String {
    let mut s = String::from("<p class=\"legend\">");
    for id in StructureId::CLINICAL.iter().chain([StructureId::MYO].iter()) {
        let [r, g, b] = PALETTE[id.id() as usize];
        let _ = write!(s, "<span style=\"color:rgb({r},{g},{b})\">■ {}</span> ", id.name());
    }
    s.push_str("</p>");
    s
}

pub fn export_report(case: &QuestionCase, vol: &LabeledVolume, geom: &SliceGeometry) -> Result<Report, ReportError> {
    let start_view = slice(vol, &case.start_pose, geom);
    let target_view = slice(vol, &case.target_pose, geom);
    let plan_panels = panels("plan", &case.plan, &start_view)?;
    let naive_panels = panels("naive", &case.naive_plan, &start_view)?;
    let target = Panel {
        file: "target.png".into(),
        caption: "target".into(),
        similarity: 12.0,
        png: encode_png(&render_segmap(&target_view))?,
    };

    let mut html = String::new();
    let _ = write!(
        html,
        "<!DOCTYPE html><html><head><meta charset=\"utf-8\"><title>{id}</title><style>\
         .row{{display:flex;flex-wrap:wrap;gap:8px}} figure{{margin:0;font:12px sans-serif}} img{{width:160px;image-rendering:pixelated}}\
         </style></head><body><h1>{id}</h1>",
        id = escape(&case.id)
    );
    let status = if case.plan.converged { "converged" } else { "did not converge" };
    let _ = write!(
        html,
        "<p>{} plan: {} steps, {status}; naive plan: {} steps.</p>",
        escape(&case.plan.planner),
        case.plan.len(),
        case.naive_plan.len()
    );
    html.push_str(&legend());
    panel_row(&mut html, "target", "Target", std::slice::from_ref(&target));
    panel_row(&mut html, "plan", "Subgoal plan", &plan_panels);
    panel_row(&mut html, "naive", "Naive plan", &naive_panels);
    html.push_str("<h2>Similarity to target</h2>");
    html.push_str(&curve_svg(&case.plan.similarity_curve(), 12.0));
    html.push_str("</body></html>\n");

    Ok(Report {
        case_id: case.id.clone(),
        target,
        plan_panels,
        naive_panels,
        html,
    })
}

impl Report {
    /// Writes `index.html` and every panel image into `dir`.
    pub fn write_to(&self, dir: impl AsRef<Path>) -> Result<(), ReportError> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        for p in std::iter::once(&self.target).chain(&self.plan_panels).chain(&self.naive_panels) {
            std::fs::write(dir.join(&p.file), &p.png)?;
        }
        std::fs::write(dir.join("index.html"), &self.html)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pose::MovementType;

    #[test]
    fn palette_is_distinct() {
        for i in 0..LABEL_COUNT {
            for j in i + 1..LABEL_COUNT {
                assert_ne!(PALETTE[i], PALETTE[j]);
            }
        }
    }

    #[test]
    fn png_round_trips_colors() {
        let map = SegMap::from_labels(3, 2, vec![0, 1, 2, 3, 4, 9]);
        let png = encode_png(&render_segmap(&map)).unwrap();
        let back = image::load_from_memory(&png).unwrap().to_rgb8();
        assert_eq!(back.dimensions(), (3, 2));
        assert_eq!(back.get_pixel(2, 1).0, PALETTE[9]);
        assert_eq!(back.get_pixel(1, 0).0, PALETTE[1]);
    }

    #[test]
    fn labels_and_curve() {
        let pose = crate::pose::ProbePose::identity();
        let mk = |kind, amount| PlanStep {
            pose,
            view: SegMap::empty(1, 1),
            movement: crate::planner::Movement { kind, amount },
            similarity_to_target: 0.0,
            phase: None,
            selection_b: None,
            via_familiar: None,
        };
        assert_eq!(movement_label(&mk(MovementType::Fan, -0.5f64.to_radians())), "fan -0.5°");
        assert_eq!(movement_label(&mk(MovementType::Press, 0.04)), "press +0.040");
        let svg = curve_svg(&[0.0, 6.0, 12.0], 12.0);
        assert!(svg.contains("20.0,140.0 180.0,80.0 340.0,20.0"));
    }
}

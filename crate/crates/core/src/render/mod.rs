//! Device-adapted SVG rendering with a geometry index and legibility checks.
//!
//! Every emitted element is recorded as a [`Mark`] whose bounding box is
//! computed from the same quantized numbers written into the SVG, so the
//! legibility check never has to parse the document.

mod layout;
mod legibility;
mod svg;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::charts::ChartSpec;

pub use layout::{select_dashboard_layout, select_layout, GUTTER, MARGIN};
pub use legibility::{legibility_check, Diagnostics, LegibilityRule, GRID_CELL};

#[derive(Debug, Error)]
pub enum RenderError {
    #[error("PanelTooSmall: panel {panel} ({width:.0}x{height:.0}px) cannot fit the chart at 8px text or larger")]
    PanelTooSmall { panel: usize, width: f64, height: f64 },
    #[error("invalid layout plan: {0}")]
    InvalidPlan(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeviceClass {
    Monitor,
    Tablet,
    Phone,
}

impl DeviceClass {
    pub const ALL: [DeviceClass; 3] = [DeviceClass::Monitor, DeviceClass::Tablet, DeviceClass::Phone];

    pub fn as_str(self) -> &'static str {
        match self {
            DeviceClass::Monitor => "monitor",
            DeviceClass::Tablet => "tablet",
            DeviceClass::Phone => "phone",
        }
    }
}

impl fmt::Display for DeviceClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DeviceClass {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "monitor" => Ok(DeviceClass::Monitor),
            "tablet" => Ok(DeviceClass::Tablet),
            "phone" => Ok(DeviceClass::Phone),
            other => Err(format!("unknown device `{other}` (expected monitor, tablet or phone)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceProfile {
    pub class: DeviceClass,
    pub width_px: u32,
    pub height_px: u32,
    pub dpi: u32,
    pub min_font_px: f64,
    pub max_blank_ratio: f64,
}

impl DeviceProfile {
    pub fn default_for(class: DeviceClass) -> Self {
        let (width_px, height_px, dpi, min_font_px) = match class {
            DeviceClass::Monitor => (1920, 1080, 96, 12.0),
            DeviceClass::Tablet => (820, 1180, 264, 12.0),
            DeviceClass::Phone => (390, 844, 460, 10.0),
        };
        DeviceProfile {
            class,
            width_px,
            height_px,
            dpi,
            min_font_px,
            max_blank_ratio: 0.85,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.width_px == 0 || self.height_px == 0 || self.dpi == 0 {
            return Err(format!("{} profile needs positive width, height and dpi", self.class));
        }
        if !(self.min_font_px > 0.0) {
            return Err(format!("{} profile needs min_font_px > 0", self.class));
        }
        if !(self.max_blank_ratio > 0.0 && self.max_blank_ratio <= 1.0) {
            return Err(format!("{} profile needs max_blank_ratio in (0, 1]", self.class));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl Rect {
    pub fn new(x: f64, y: f64, w: f64, h: f64) -> Self {
        Rect { x, y, w, h }
    }

    pub fn right(&self) -> f64 {
        self.x + self.w
    }

    pub fn bottom(&self) -> f64 {
        self.y + self.h
    }

    /// Shrinks every side by `d`; collapses to the center line when too small.
    pub fn inset(&self, d: f64) -> Rect {
        let dx = d.min(self.w / 2.0);
        let dy = d.min(self.h / 2.0);
        Rect::new(self.x + dx, self.y + dy, self.w - 2.0 * dx, self.h - 2.0 * dy)
    }

    /// True when the interiors intersect.
    pub fn overlaps(&self, other: &Rect) -> bool {
        self.x < other.right() && other.x < self.right() && self.y < other.bottom() && other.y < self.bottom()
    }

    pub fn contains(&self, other: &Rect, eps: f64) -> bool {
        other.x >= self.x - eps
            && other.y >= self.y - eps
            && other.right() <= self.right() + eps
            && other.bottom() <= self.bottom() + eps
    }

    pub(crate) fn from_points(points: impl IntoIterator<Item = (f64, f64)>) -> Rect {
        let (mut x0, mut y0, mut x1, mut y1) = (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
        for (x, y) in points {
            x0 = x0.min(x);
            y0 = y0.min(y);
            x1 = x1.max(x);
            y1 = y1.max(y);
        }
        Rect::new(x0, y0, x1 - x0, y1 - y0)
    }
}

/// Uniform scale followed by translation: `p' = p·scale + (tx, ty)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Transform {
    pub scale: f64,
    pub tx: f64,
    pub ty: f64,
}

impl Transform {
    pub const IDENTITY: Transform = Transform {
        scale: 1.0,
        tx: 0.0,
        ty: 0.0,
    };

    pub fn apply(&self, (x, y): (f64, f64)) -> (f64, f64) {
        (x * self.scale + self.tx, y * self.scale + self.ty)
    }

    pub fn apply_rect(&self, r: &Rect) -> Rect {
        let (x, y) = self.apply((r.x, r.y));
        Rect::new(x, y, r.w * self.scale, r.h * self.scale)
    }
}

/// Largest uniform scale that fits `bbox` inside `viewport`, centered.
pub fn scale_to_viewport(bbox: &Rect, viewport: &Rect) -> Transform {
    let scale = (viewport.w / bbox.w).min(viewport.h / bbox.h);
    Transform {
        scale,
        tx: viewport.x + (viewport.w - bbox.w * scale) / 2.0 - bbox.x * scale,
        ty: viewport.y + (viewport.h - bbox.h * scale) / 2.0 - bbox.y * scale,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Orientation {
    Lateral,
    Vertical,
    Grid,
}

/// One drawing area. `series` is set for single-series facets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Panel {
    pub rect: Rect,
    pub chart: usize,
    pub series: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayoutPlan {
    pub orientation: Orientation,
    /// (width, height) after orientation.
    pub viewport: (f64, f64),
    pub panels: Vec<Panel>,
    pub margins: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MarkKind {
    Frame,
    Axis,
    Tick,
    Segment,
    Point,
    Polyline,
    Bar,
    Swatch,
    Text,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mark {
    pub kind: MarkKind,
    pub panel: usize,
    pub bbox: Rect,
    /// Text marks only.
    pub font_px: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RenderedChart {
    pub svg: String,
    pub viewport: (f64, f64),
    pub marks: Vec<Mark>,
    pub diagnostics: Diagnostics,
}

impl RenderedChart {
    pub fn marks_in_panel(&self, panel: usize) -> impl Iterator<Item = &Mark> {
        self.marks.iter().filter(move |m| m.panel == panel)
    }

    pub fn frames(&self) -> impl Iterator<Item = &Mark> {
        self.marks.iter().filter(|m| m.kind == MarkKind::Frame)
    }
}

pub fn render_svg(spec: &ChartSpec, plan: &LayoutPlan, profile: &DeviceProfile) -> Result<RenderedChart, RenderError> {
    render_dashboard(std::slice::from_ref(spec), plan, profile)
}

/// Renders every panel of `plan`; panels refer to charts by index.
pub fn render_dashboard(
    specs: &[ChartSpec],
    plan: &LayoutPlan,
    profile: &DeviceProfile,
) -> Result<RenderedChart, RenderError> {
    for (i, p) in plan.panels.iter().enumerate() {
        let spec = specs
            .get(p.chart)
            .ok_or_else(|| RenderError::InvalidPlan(format!("panel {i} refers to missing chart {}", p.chart)))?;
        if let Some(s) = p.series {
            if s >= spec.series.len() {
                return Err(RenderError::InvalidPlan(format!(
                    "panel {i} refers to missing series {s}"
                )));
            }
        }
    }
    let (svg, marks) = svg::draw(specs, plan, profile)?;
    let mut rendered = RenderedChart {
        svg,
        viewport: plan.viewport,
        marks,
        diagnostics: Diagnostics::default(),
    };
    rendered.diagnostics = legibility_check(&rendered, profile);
    Ok(rendered)
}

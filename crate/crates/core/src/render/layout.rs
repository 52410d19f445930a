use super::{DeviceClass, DeviceProfile, LayoutPlan, Orientation, Panel, Rect};
use crate::charts::ChartSpec;

/// Outer margin of the viewport, in pixels.
pub const MARGIN: f64 = 8.0;
/// Space between neighbouring panels, in pixels.
pub const GUTTER: f64 = 8.0;

pub fn select_layout(spec: &ChartSpec, profile: &DeviceProfile) -> LayoutPlan {
    select_dashboard_layout(std::slice::from_ref(spec), profile)
}

/// Phones rotate to landscape and place charts side by side; tablets stay
/// portrait and stack one facet per series; monitors use a square-ish grid
/// of equally sized cells.
pub fn select_dashboard_layout(specs: &[ChartSpec], profile: &DeviceProfile) -> LayoutPlan {
    let (w, h) = (profile.width_px as f64, profile.height_px as f64);
    let (orientation, viewport) = match profile.class {
        DeviceClass::Phone => (Orientation::Lateral, (w.max(h), w.min(h))),
        DeviceClass::Tablet => (Orientation::Vertical, (w.min(h), w.max(h))),
        DeviceClass::Monitor => (Orientation::Grid, (w, h)),
    };
    let area = Rect::new(0.0, 0.0, viewport.0, viewport.1).inset(MARGIN);
    let panels = match orientation {
        Orientation::Lateral => {
            let cells = grid(&area, specs.len(), 1);
            cells.into_iter().enumerate().map(|(i, rect)| whole(rect, i)).collect()
        }
        Orientation::Vertical => {
            let facets: Vec<(usize, usize)> = specs
                .iter()
                .enumerate()
                .flat_map(|(c, s)| (0..s.series.len()).map(move |k| (c, k)))
                .collect();
            grid(&area, 1, facets.len())
                .into_iter()
                .zip(facets)
                .map(|(rect, (chart, series))| Panel {
                    rect,
                    chart,
                    series: Some(series),
                })
                .collect()
        }
        Orientation::Grid => {
            let cols = (specs.len() as f64).sqrt().ceil().max(1.0) as usize;
            let rows = specs.len().div_ceil(cols);
            grid(&area, cols, rows)
                .into_iter()
                .take(specs.len())
                .enumerate()
                .map(|(i, rect)| whole(rect, i))
                .collect()
        }
    };
    LayoutPlan {
        orientation,
        viewport,
        panels,
        margins: MARGIN,
    }
}

fn whole(rect: Rect, chart: usize) -> Panel {
    Panel {
        rect,
        chart,
        series: None,
    }
}

/// Row-major equal cells separated by [`GUTTER`].
fn grid(area: &Rect, cols: usize, rows: usize) -> Vec<Rect> {
    if cols == 0 || rows == 0 {
        return Vec::new();
    }
    let cw = ((area.w - GUTTER * (cols - 1) as f64) / cols as f64).max(0.0);
    let ch = ((area.h - GUTTER * (rows - 1) as f64) / rows as f64).max(0.0);
    let mut cells = Vec::with_capacity(cols * rows);
    for r in 0..rows {
        for c in 0..cols {
            // Degenerate areas collapse every cell onto the origin corner.
            let x = if cw > 0.0 {
                area.x + c as f64 * (cw + GUTTER)
            } else {
                area.x
            };
            let y = if ch > 0.0 {
                area.y + r as f64 * (ch + GUTTER)
            } else {
                area.y
            };
            cells.push(Rect::new(x, y, cw, ch));
        }
    }
    cells
}

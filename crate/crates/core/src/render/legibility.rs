use std::fmt;

use super::{DeviceProfile, MarkKind, Rect, RenderedChart};

/// Side of an occupancy-grid cell, in pixels.
pub const GRID_CELL: f64 = 4.0;

const EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LegibilityRule {
    OutOfView,
    BlankSpace,
    UnreadableText,
}

impl LegibilityRule {
    /// Key used in the line-oriented diagnostics report.
    pub fn key(self) -> &'static str {
        match self {
            LegibilityRule::OutOfView => "out_of_view_marks",
            LegibilityRule::BlankSpace => "blank_ratio",
            LegibilityRule::UnreadableText => "min_text_px",
        }
    }
}

impl fmt::Display for LegibilityRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LegibilityRule::OutOfView => "out of view",
            LegibilityRule::BlankSpace => "blank space",
            LegibilityRule::UnreadableText => "unreadable text",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Diagnostics {
    pub out_of_view_marks: usize,
    pub blank_ratio: f64,
    /// `None` when nothing textual was emitted.
    pub min_text_px: Option<f64>,
    pub max_blank_ratio: f64,
    pub min_font_px: f64,
    pub failed: Vec<LegibilityRule>,
}

impl Default for Diagnostics {
    fn default() -> Self {
        Diagnostics {
            out_of_view_marks: 0,
            blank_ratio: 1.0,
            min_text_px: None,
            max_blank_ratio: 1.0,
            min_font_px: 0.0,
            failed: Vec::new(),
        }
    }
}

impl Diagnostics {
    pub fn passed(&self) -> bool {
        self.failed.is_empty()
    }

    /// `rule: value: threshold: pass|fail`, one line per rule, then the verdict.
    pub fn report(&self) -> String {
        let status = |rule| if self.failed.contains(&rule) { "fail" } else { "pass" };
        let text = self.min_text_px.map(fmt_num).unwrap_or_else(|| "none".into());
        let mut out = format!(
            "{}: {}: 0: {}\n{}: {:.4}: {}: {}\n{}: {}: {}: {}\n",
            LegibilityRule::OutOfView.key(),
            self.out_of_view_marks,
            status(LegibilityRule::OutOfView),
            LegibilityRule::BlankSpace.key(),
            self.blank_ratio,
            fmt_num(self.max_blank_ratio),
            status(LegibilityRule::BlankSpace),
            LegibilityRule::UnreadableText.key(),
            text,
            fmt_num(self.min_font_px),
            status(LegibilityRule::UnreadableText),
        );
        if self.passed() {
            out.push_str("verdict: pass\n");
        } else {
            let names: Vec<String> = self.failed.iter().map(ToString::to_string).collect();
            out.push_str(&format!("verdict: fail: {}\n", names.join(", ")));
        }
        out
    }
}

fn fmt_num(v: f64) -> String {
    format!("{v}")
}

pub fn legibility_check(rendered: &RenderedChart, profile: &DeviceProfile) -> Diagnostics {
    let (vw, vh) = rendered.viewport;
    let view = Rect::new(0.0, 0.0, vw, vh);
    let out_of_view_marks = rendered.marks.iter().filter(|m| !view.contains(&m.bbox, EPS)).count();
    let blank_ratio = blank_ratio(rendered.marks.iter().map(|m| &m.bbox), vw, vh);
    let min_text_px = rendered
        .marks
        .iter()
        .filter(|m| m.kind == MarkKind::Text)
        .filter_map(|m| m.font_px)
        .reduce(f64::min);

    let mut failed = Vec::new();
    if out_of_view_marks > 0 {
        failed.push(LegibilityRule::OutOfView);
    }
    if blank_ratio > profile.max_blank_ratio {
        failed.push(LegibilityRule::BlankSpace);
    }
    if min_text_px.is_some_and(|px| px < profile.min_font_px) {
        failed.push(LegibilityRule::UnreadableText);
    }
    Diagnostics {
        out_of_view_marks,
        blank_ratio,
        min_text_px,
        max_blank_ratio: profile.max_blank_ratio,
        min_font_px: profile.min_font_px,
        failed,
    }
}

/// `1 − occupied/total` on a [`GRID_CELL`] grid. A cell is occupied when any
/// box overlaps it; zero-width or zero-height boxes occupy the cells they
/// touch. Edge cells count only their part inside the viewport.
pub(crate) fn blank_ratio<'a>(boxes: impl Iterator<Item = &'a Rect>, vw: f64, vh: f64) -> f64 {
    if !(vw > 0.0 && vh > 0.0) {
        return 1.0;
    }
    let cols = (vw / GRID_CELL).ceil() as usize;
    let rows = (vh / GRID_CELL).ceil() as usize;
    let mut grid = vec![false; cols * rows];
    for b in boxes {
        let x0 = b.x.max(0.0);
        let y0 = b.y.max(0.0);
        let x1 = b.right().min(vw);
        let y1 = b.bottom().min(vh);
        if x1 < x0 || y1 < y0 {
            continue;
        }
        let span = |lo: f64, hi: f64, n: usize| {
            let first = ((lo / GRID_CELL).floor() as usize).min(n - 1);
            let last = ((hi / GRID_CELL).ceil() as usize).clamp(first + 1, n);
            first..last
        };
        let cs = span(x0, x1, cols);
        for r in span(y0, y1, rows) {
            for c in cs.clone() {
                grid[r * cols + c] = true;
            }
        }
    }
    let mut occupied = 0.0;
    for r in 0..rows {
        let ch = (vh - r as f64 * GRID_CELL).min(GRID_CELL);
        for c in 0..cols {
            if grid[r * cols + c] {
                occupied += (vw - c as f64 * GRID_CELL).min(GRID_CELL) * ch;
            }
        }
    }
    1.0 - occupied / (vw * vh)
}

#[cfg(test)]
mod tests {
    use super::super::Mark;
    use super::*;

    fn rendered(marks: Vec<Mark>, w: f64, h: f64) -> RenderedChart {
        RenderedChart {
            svg: String::new(),
            viewport: (w, h),
            marks,
            diagnostics: Diagnostics::default(),
        }
    }

    fn mark(kind: MarkKind, bbox: Rect, font: Option<f64>) -> Mark {
        Mark {
            kind,
            panel: 0,
            bbox,
            font_px: font,
        }
    }

    /// Cell-by-cell overlap test, written independently of `blank_ratio`.
    fn grid_oracle(boxes: &[Rect], w: f64, h: f64) -> f64 {
        let mut occupied = 0.0;
        let mut y = 0.0;
        while y < h {
            let mut x = 0.0;
            let ch = (h - y).min(GRID_CELL);
            while x < w {
                let cw = (w - x).min(GRID_CELL);
                let hit = boxes.iter().any(|b| {
                    let (bx1, by1) = (b.right().min(w), b.bottom().min(h));
                    let (bx0, by0) = (b.x.max(0.0), b.y.max(0.0));
                    let xs = if bx1 > bx0 {
                        bx0 < x + cw && x < bx1
                    } else {
                        x <= bx0 && bx0 < x + cw || (bx0 == w && x + cw == w)
                    };
                    let ys = if by1 > by0 {
                        by0 < y + ch && y < by1
                    } else {
                        y <= by0 && by0 < y + ch || (by0 == h && y + ch == h)
                    };
                    bx1 >= bx0 && by1 >= by0 && xs && ys
                });
                if hit {
                    occupied += cw * ch;
                }
                x += GRID_CELL;
            }
            y += GRID_CELL;
        }
        1.0 - occupied / (w * h)
    }

    #[test]
    fn single_small_mark_is_mostly_blank() {
        let b = Rect::new(0.0, 0.0, 10.0, 10.0);
        let ratio = blank_ratio(std::iter::once(&b), 100.0, 100.0);
        assert_eq!(ratio, grid_oracle(&[b], 100.0, 100.0));
        assert_eq!(ratio, 1.0 - 144.0 / 10_000.0);
        // Exact geometry gives 0.99; the grid may only err by boundary cells.
        assert!((ratio - 0.99).abs() <= 0.01);
    }

    #[test]
    fn grid_matches_oracle_on_assorted_boxes() {
        let boxes = [
            Rect::new(3.0, 5.0, 17.5, 0.0),
            Rect::new(50.0, 50.0, 0.0, 9.0),
            Rect::new(90.0, 91.0, 30.0, 30.0),
            Rect::new(-5.0, 20.0, 12.0, 4.0),
            Rect::new(33.3, 61.7, 8.1, 2.2),
        ];
        for (w, h) in [(100.0, 100.0), (101.0, 97.0), (37.0, 64.5)] {
            assert_eq!(blank_ratio(boxes.iter(), w, h), grid_oracle(&boxes, w, h), "{w}x{h}");
        }
    }

    #[test]
    fn full_cover_and_empty() {
        let all = Rect::new(0.0, 0.0, 50.0, 30.0);
        assert_eq!(blank_ratio(std::iter::once(&all), 50.0, 30.0), 0.0);
        assert_eq!(blank_ratio(std::iter::empty(), 50.0, 30.0), 1.0);
    }

    #[test]
    fn out_of_view_is_counted() {
        let mut p = DeviceProfile::default_for(super::super::DeviceClass::Monitor);
        p.max_blank_ratio = 1.0;
        let r = rendered(
            vec![
                mark(MarkKind::Frame, Rect::new(0.0, 0.0, 100.0, 100.0), None),
                mark(MarkKind::Point, Rect::new(95.0, 10.0, 10.0, 10.0), None),
                mark(MarkKind::Point, Rect::new(-1.0, 10.0, 5.0, 5.0), None),
            ],
            100.0,
            100.0,
        );
        let d = legibility_check(&r, &p);
        assert_eq!(d.out_of_view_marks, 2);
        assert_eq!(d.failed, [LegibilityRule::OutOfView]);
    }

    #[test]
    fn small_text_fails_only_unreadable_text() {
        let mut p = DeviceProfile::default_for(super::super::DeviceClass::Monitor);
        p.min_font_px = 10.0;
        let r = rendered(
            vec![
                mark(MarkKind::Frame, Rect::new(0.0, 0.0, 100.0, 100.0), None),
                mark(MarkKind::Text, Rect::new(10.0, 10.0, 20.0, 6.0), Some(6.0)),
            ],
            100.0,
            100.0,
        );
        let d = legibility_check(&r, &p);
        assert_eq!(d.min_text_px, Some(6.0));
        assert_eq!(d.failed, [LegibilityRule::UnreadableText]);
        assert!(d.report().ends_with("verdict: fail: unreadable text\n"));
        assert!(d.report().contains("min_text_px: 6: 10: fail\n"));
    }

    #[test]
    fn report_lines() {
        let p = DeviceProfile::default_for(super::super::DeviceClass::Monitor);
        let r = rendered(
            vec![mark(MarkKind::Frame, Rect::new(0.0, 0.0, 100.0, 100.0), None)],
            100.0,
            100.0,
        );
        let d = legibility_check(&r, &p);
        assert_eq!(
            d.report(),
            "out_of_view_marks: 0: 0: pass\nblank_ratio: 0.0000: 0.85: pass\nmin_text_px: none: 12: pass\nverdict: pass\n"
        );
    }
}

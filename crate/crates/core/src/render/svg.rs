use std::f64::consts::{FRAC_PI_2, PI, TAU};
use std::fmt::Write as _;

use super::{scale_to_viewport, DeviceProfile, LayoutPlan, Mark, MarkKind, Panel, Rect, RenderError, Transform};
use crate::charts::{ChartGeometry, ChartSpec};
use crate::store::SliceGranularity;

/// Estimated glyph advance as a fraction of the font size.
const CHAR_WIDTH_EM: f64 = 0.6;
const ASCENT_EM: f64 = 0.8;
const LINE_HEIGHT_EM: f64 = 1.25;
const PANEL_PAD: f64 = 4.0;
const TICK_LEN: f64 = 4.0;
const LABEL_GAP: f64 = 4.0;
const MIN_TEXT_PX: f64 = 8.0;
const THINNING_ROUNDS: u32 = 3;
const Y_TICKS: usize = 5;
/// Line plots are drawn in a 2:1 design box, radial plots in a square one.
const LINE_DESIGN: (f64, f64) = (1000.0, 500.0);
const MIN_PLOT: (f64, f64) = (40.0, 20.0);
const POINT_R: f64 = 2.5;
const EXCURSION_R: f64 = 3.5;

/// Rounds to 0.01 px; both the SVG text and the geometry index use this.
fn q(v: f64) -> f64 {
    let r = (v * 100.0).round() / 100.0;
    if r == 0.0 {
        0.0
    } else {
        r
    }
}

fn text_width(text: &str, font: f64) -> f64 {
    text.chars().count() as f64 * CHAR_WIDTH_EM * font
}

fn escape_xml(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            c => out.push(c),
        }
    }
    out
}

#[derive(Clone, Copy)]
enum Anchor {
    Start,
    Middle,
    End,
}

impl Anchor {
    fn as_str(self) -> &'static str {
        match self {
            Anchor::Start => "start",
            Anchor::Middle => "middle",
            Anchor::End => "end",
        }
    }
}

struct Canvas {
    svg: String,
    marks: Vec<Mark>,
    panel: usize,
}

impl Canvas {
    fn mark(&mut self, kind: MarkKind, bbox: Rect, font_px: Option<f64>) {
        self.marks.push(Mark {
            kind,
            panel: self.panel,
            bbox,
            font_px,
        });
    }

    fn rect(&mut self, kind: MarkKind, r: Rect, attrs: &str) {
        let r = Rect::new(q(r.x), q(r.y), q(r.w), q(r.h));
        let _ = writeln!(
            self.svg,
            r#"<rect x="{}" y="{}" width="{}" height="{}" {attrs}/>"#,
            r.x, r.y, r.w, r.h
        );
        self.mark(kind, r, None);
    }

    fn line(&mut self, kind: MarkKind, a: (f64, f64), b: (f64, f64), attrs: &str) {
        let (x1, y1, x2, y2) = (q(a.0), q(a.1), q(b.0), q(b.1));
        let _ = writeln!(self.svg, r#"<line x1="{x1}" y1="{y1}" x2="{x2}" y2="{y2}" {attrs}/>"#);
        self.mark(kind, Rect::from_points([(x1, y1), (x2, y2)]), None);
    }

    fn circle(&mut self, kind: MarkKind, c: (f64, f64), r: f64, attrs: &str) {
        let (cx, cy, r) = (q(c.0), q(c.1), q(r));
        let _ = writeln!(self.svg, r#"<circle cx="{cx}" cy="{cy}" r="{r}" {attrs}/>"#);
        self.mark(kind, Rect::new(cx - r, cy - r, 2.0 * r, 2.0 * r), None);
    }

    fn polyline(&mut self, points: &[(f64, f64)], attrs: &str) {
        let pts: Vec<(f64, f64)> = points.iter().map(|&(x, y)| (q(x), q(y))).collect();
        let text: Vec<String> = pts.iter().map(|(x, y)| format!("{x},{y}")).collect();
        let _ = writeln!(self.svg, r#"<polyline points="{}" {attrs}/>"#, text.join(" "));
        self.mark(MarkKind::Polyline, Rect::from_points(pts), None);
    }

    /// Annular sector between two radii, angles clockwise from 12 o'clock.
    fn sector(&mut self, center: (f64, f64), radii: (f64, f64), angles: (f64, f64), attrs: &str) {
        let (r0, r1) = (q(radii.0.min(radii.1).max(0.0)), q(radii.0.max(radii.1).max(0.0)));
        let (a0, a1) = angles;
        let at = |r: f64, a: f64| (q(center.0 + r * a.sin()), q(center.1 - r * a.cos()));
        let (p0, p1, p2, p3) = (at(r1, a0), at(r1, a1), at(r0, a1), at(r0, a0));
        let large = if a1 - a0 > PI { 1 } else { 0 };
        let _ = writeln!(
            self.svg,
            r#"<path d="M{},{} A{r1},{r1} 0 {large} 1 {},{} L{},{} A{r0},{r0} 0 {large} 0 {},{} Z" {attrs}/>"#,
            p0.0, p0.1, p1.0, p1.1, p2.0, p2.1, p3.0, p3.1
        );
        let mut extremes = vec![p0, p1, p2, p3];
        // Cardinal directions inside the swept angle extend the box.
        for k in 0..8 {
            let a = k as f64 * FRAC_PI_2;
            if a > a0 && a < a1 {
                extremes.push(at(r1, a));
            }
        }
        self.mark(MarkKind::Bar, Rect::from_points(extremes), None);
    }

    fn text(&mut self, at: (f64, f64), font: f64, anchor: Anchor, content: &str, attrs: &str) {
        let (x, y, font) = (q(at.0), q(at.1), q(font));
        let w = text_width(content, font);
        let left = match anchor {
            Anchor::Start => x,
            Anchor::Middle => x - w / 2.0,
            Anchor::End => x - w,
        };
        let _ = writeln!(
            self.svg,
            r#"<text x="{x}" y="{y}" font-size="{font}" text-anchor="{}" {attrs}>{}</text>"#,
            anchor.as_str(),
            escape_xml(content)
        );
        self.mark(
            MarkKind::Text,
            Rect::new(left, y - ASCENT_EM * font, w, font),
            Some(font),
        );
    }
}

pub(super) fn draw(
    specs: &[ChartSpec],
    plan: &LayoutPlan,
    profile: &DeviceProfile,
) -> Result<(String, Vec<Mark>), RenderError> {
    let (w, h) = plan.viewport;
    let mut canvas = Canvas {
        svg: String::new(),
        marks: Vec::new(),
        panel: 0,
    };
    let _ = writeln!(canvas.svg, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        canvas.svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" data-device="{}" data-dpi="{}">"#,
        profile.class, profile.dpi
    );
    let _ = writeln!(
        canvas.svg,
        r##"<rect class="background" x="0" y="0" width="{w}" height="{h}" fill="#ffffff"/>"##
    );
    for (i, panel) in plan.panels.iter().enumerate() {
        canvas.panel = i;
        let spec = &specs[panel.chart];
        let layout = fit_panel(spec, panel, profile).ok_or(RenderError::PanelTooSmall {
            panel: i,
            width: panel.rect.w,
            height: panel.rect.h,
        })?;
        let _ = writeln!(
            canvas.svg,
            r#"<g class="panel {}" data-panel="{i}" data-chart="{}">"#,
            spec.kind, panel.chart
        );
        draw_legend(&mut canvas, spec, panel, &layout);
        match &layout.body {
            Body::Line(line) => draw_line_panel(&mut canvas, spec, panel, &layout, line),
            Body::Radial(radial) => draw_radial_panel(&mut canvas, spec, panel, &layout, radial),
        }
        canvas.svg.push_str("</g>\n");
    }
    canvas.svg.push_str("</svg>\n");
    Ok((canvas.svg, canvas.marks))
}

fn slice_label(spec: &ChartSpec, i: usize) -> String {
    let fmt = match spec.granularity {
        SliceGranularity::Month => "%Y-%m",
        _ => "%Y-%m-%d",
    };
    spec.slices[i].format(fmt).to_string()
}

fn tick_label(v: f64) -> String {
    let s = format!("{v:.2}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".into()
    } else {
        s.into()
    }
}

fn panel_series(spec: &ChartSpec, panel: &Panel) -> Vec<usize> {
    match panel.series {
        Some(s) => vec![s],
        None => (0..spec.series.len()).collect(),
    }
}

struct PanelLayout {
    font: f64,
    /// Keep every `stride`-th tick label.
    stride: usize,
    legend: Vec<LegendEntry>,
    body: Body,
}

enum Body {
    Line(LineBody),
    Radial(RadialBody),
}

struct LineBody {
    transform: Transform,
    y_domain: (f64, f64),
}

struct RadialBody {
    transform: Transform,
    extent: f64,
    center: (f64, f64),
    radius_px: f64,
}

/// Tries the profile's font size first, then smaller sizes down to 8px,
/// each with up to three rounds of tick-label thinning.
fn fit_panel(spec: &ChartSpec, panel: &Panel, profile: &DeviceProfile) -> Option<PanelLayout> {
    let start = profile.min_font_px;
    let mut fonts = vec![start];
    let mut f = start.ceil() - 1.0;
    while f >= MIN_TEXT_PX {
        if f < start {
            fonts.push(f);
        }
        f -= 1.0;
    }
    for font in fonts {
        for round in 0..=THINNING_ROUNDS {
            if let Some(layout) = try_layout(spec, panel, font, 1 << round) {
                return Some(layout);
            }
        }
    }
    None
}

fn try_layout(spec: &ChartSpec, panel: &Panel, font: f64, stride: usize) -> Option<PanelLayout> {
    let content = panel.rect.inset(PANEL_PAD);
    let line_h = font * LINE_HEIGHT_EM;
    let (legend, legend_h) = legend_layout(spec, panel, &content, font)?;
    let body_area = Rect::new(content.x, content.y + legend_h, content.w, content.h - legend_h);
    let label_w = (0..spec.slices.len())
        .map(|i| text_width(&slice_label(spec, i), font))
        .fold(0.0, f64::max);
    let n = spec.slices.len();
    let body = if spec.kind.is_radial() {
        let h_reserve = label_w + TICK_LEN + LABEL_GAP;
        let v_reserve = line_h + TICK_LEN + LABEL_GAP;
        let radius_px = ((body_area.w - 2.0 * h_reserve) / 2.0).min((body_area.h - 2.0 * v_reserve) / 2.0);
        if radius_px < MIN_PLOT.0 / 2.0 {
            return None;
        }
        // Adjacent kept labels must not collide along the label ring.
        let ring = radius_px + TICK_LEN + LABEL_GAP;
        if n > 1 {
            let spacing = TAU * ring / n as f64 * stride as f64;
            let kept = n.div_ceil(stride);
            if kept > 1 && spacing < label_w + LABEL_GAP {
                return None;
            }
        }
        let extent = radial_extent(spec);
        let center = (body_area.x + body_area.w / 2.0, body_area.y + body_area.h / 2.0);
        let target = Rect::new(
            center.0 - radius_px,
            center.1 - radius_px,
            2.0 * radius_px,
            2.0 * radius_px,
        );
        let transform = scale_to_viewport(&Rect::new(0.0, 0.0, 2.0 * extent, 2.0 * extent), &target);
        Body::Radial(RadialBody {
            transform,
            extent,
            center,
            radius_px,
        })
    } else {
        let y_domain = line_domain(spec);
        let y_label_w = (0..Y_TICKS)
            .map(|k| text_width(&tick_label(y_value(y_domain, k)), font))
            .fold(0.0, f64::max);
        let left = (y_label_w + TICK_LEN + LABEL_GAP).max(label_w / 2.0);
        let right = label_w / 2.0;
        let bottom = TICK_LEN + LABEL_GAP + line_h;
        let top = line_h / 2.0;
        let area = Rect::new(
            body_area.x + left,
            body_area.y + top,
            body_area.w - left - right,
            body_area.h - top - bottom,
        );
        if area.w < MIN_PLOT.0 || area.h < MIN_PLOT.1 {
            return None;
        }
        let design = Rect::new(0.0, 0.0, LINE_DESIGN.0, LINE_DESIGN.1);
        let transform = scale_to_viewport(&design, &area);
        let plot = transform.apply_rect(&design);
        if n > 1 {
            let spacing = plot.w / (n - 1) as f64 * stride as f64;
            if n.div_ceil(stride) > 1 && spacing < label_w + LABEL_GAP {
                return None;
            }
        }
        let y_spacing = plot.h / (Y_TICKS - 1) as f64 * y_stride(stride) as f64;
        if y_spacing < line_h {
            return None;
        }
        Body::Line(LineBody { transform, y_domain })
    };
    Some(PanelLayout {
        font,
        stride,
        legend,
        body,
    })
}

/// Legend entries flow left to right and wrap. Returns entry origins.
/// Series index and top-left origin of one legend entry.
type LegendEntry = (usize, (f64, f64));

fn legend_layout(spec: &ChartSpec, panel: &Panel, content: &Rect, font: f64) -> Option<(Vec<LegendEntry>, f64)> {
    let line_h = font * LINE_HEIGHT_EM;
    let swatch = ASCENT_EM * font;
    let mut entries = Vec::new();
    let (mut x, mut row) = (content.x, 0usize);
    for s in panel_series(spec, panel) {
        let w = swatch + LABEL_GAP + text_width(&spec.series[s].metric, font);
        if w > content.w {
            return None;
        }
        if x > content.x && x + w > content.right() {
            x = content.x;
            row += 1;
        }
        entries.push((s, (x, content.y + row as f64 * line_h)));
        x += w + 2.0 * font;
    }
    let height = (row + 1) as f64 * line_h;
    if height >= content.h {
        return None;
    }
    Some((entries, height))
}

fn draw_legend(canvas: &mut Canvas, spec: &ChartSpec, panel: &Panel, layout: &PanelLayout) {
    let _ = panel;
    let font = layout.font;
    let swatch = ASCENT_EM * font;
    for &(s, (x, y)) in &layout.legend {
        let top = y + (LINE_HEIGHT_EM - 1.0) * font / 2.0;
        canvas.rect(
            MarkKind::Swatch,
            Rect::new(x, top, swatch, swatch),
            &format!(r#"fill="{}""#, spec.color(s)),
        );
        canvas.text(
            (x + swatch + LABEL_GAP, top + ASCENT_EM * font),
            font,
            Anchor::Start,
            &spec.series[s].metric,
            r##"fill="#222222""##,
        );
    }
}

/// Value axis covers the chart's domain plus any excursions, shared by facets.
fn line_domain(spec: &ChartSpec) -> (f64, f64) {
    let (mut lo, mut hi) = spec.value_domain;
    for s in &spec.series {
        for p in &s.points {
            lo = lo.min(p.v);
            hi = hi.max(p.v);
        }
    }
    (lo, hi)
}

fn y_value((lo, hi): (f64, f64), k: usize) -> f64 {
    lo + (hi - lo) * k as f64 / (Y_TICKS - 1) as f64
}

/// Value ticks thin at most once: 5 → 3.
fn y_stride(stride: usize) -> usize {
    if stride > 1 {
        2
    } else {
        1
    }
}

fn x_design(spec: &ChartSpec, t: f64) -> f64 {
    let n = spec.slices.len();
    if n <= 1 {
        LINE_DESIGN.0 / 2.0
    } else {
        t / (n - 1) as f64 * LINE_DESIGN.0
    }
}

fn draw_line_panel(canvas: &mut Canvas, spec: &ChartSpec, panel: &Panel, layout: &PanelLayout, body: &LineBody) {
    let font = layout.font;
    let tf = body.transform;
    let (lo, hi) = body.y_domain;
    let y_design = |v: f64| LINE_DESIGN.1 - (v - lo) / (hi - lo) * LINE_DESIGN.1;
    let plot = tf.apply_rect(&Rect::new(0.0, 0.0, LINE_DESIGN.0, LINE_DESIGN.1));

    canvas.rect(
        MarkKind::Frame,
        plot,
        r##"class="plot" fill="#f7f7f7" stroke="#cccccc""##,
    );
    let axis = r##"stroke="#444444" stroke-width="1""##;
    canvas.line(
        MarkKind::Axis,
        (plot.x, plot.bottom()),
        (plot.right(), plot.bottom()),
        axis,
    );
    canvas.line(MarkKind::Axis, (plot.x, plot.y), (plot.x, plot.bottom()), axis);

    for i in (0..spec.slices.len()).step_by(layout.stride) {
        let (x, _) = tf.apply((x_design(spec, i as f64), 0.0));
        canvas.line(MarkKind::Tick, (x, plot.bottom()), (x, plot.bottom() + TICK_LEN), axis);
        canvas.text(
            (x, plot.bottom() + TICK_LEN + LABEL_GAP + ASCENT_EM * font),
            font,
            Anchor::Middle,
            &slice_label(spec, i),
            r##"fill="#222222""##,
        );
    }
    for k in (0..Y_TICKS).step_by(y_stride(layout.stride)) {
        let v = y_value(body.y_domain, k);
        let (_, y) = tf.apply((0.0, y_design(v)));
        canvas.line(MarkKind::Tick, (plot.x - TICK_LEN, y), (plot.x, y), axis);
        canvas.text(
            (plot.x - TICK_LEN - LABEL_GAP, y + (ASCENT_EM - 0.5) * font),
            font,
            Anchor::End,
            &tick_label(v),
            r##"fill="#222222""##,
        );
    }

    let ChartGeometry::Segments(per_series) = &spec.geometry else {
        return;
    };
    for s in panel_series(spec, panel) {
        let color = spec.color(s);
        let stroke = format!(r#"class="segment" stroke="{color}" stroke-width="2""#);
        for seg in &per_series[s] {
            let a = tf.apply((x_design(spec, seg.start.t), y_design(seg.start.v)));
            let b = tf.apply((x_design(spec, seg.end.t), y_design(seg.end.v)));
            canvas.line(MarkKind::Segment, a, b, &stroke);
        }
        let series = &spec.series[s];
        for (i, p) in series.points.iter().enumerate() {
            let c = tf.apply((x_design(spec, p.t), y_design(p.v)));
            if series.out_of_range.contains(&i) {
                canvas.circle(
                    MarkKind::Point,
                    c,
                    EXCURSION_R,
                    &format!(r##"class="excursion" fill="#ffffff" stroke="{color}" stroke-width="2""##),
                );
            } else {
                canvas.circle(MarkKind::Point, c, POINT_R, &format!(r#"fill="{color}""#));
            }
        }
    }
}

/// Largest radius any mark reaches, never below the outer ring.
fn radial_extent(spec: &ChartSpec) -> f64 {
    let outer = spec.radii.map(|r| r.1).unwrap_or(1.0);
    let reach = match &spec.geometry {
        ChartGeometry::Polygons(rings) => rings.iter().flatten().map(|p| p.radius.abs()).fold(0.0, f64::max),
        ChartGeometry::Bars(bars) => bars.iter().map(|b| b.outer_radius.abs()).fold(0.0, f64::max),
        ChartGeometry::Segments(_) => 0.0,
    };
    outer.max(reach)
}

fn draw_radial_panel(canvas: &mut Canvas, spec: &ChartSpec, panel: &Panel, layout: &PanelLayout, body: &RadialBody) {
    let font = layout.font;
    let tf = body.transform;
    let e = body.extent;
    let (r_inner, r_outer) = spec.radii.unwrap_or((0.1, 1.0));
    // Design space is [0, 2e]² with the pole at (e, e).
    let polar = |angle: f64, r: f64| tf.apply((e + r * angle.sin(), e - r * angle.cos()));
    let px = |r: f64| r * tf.scale;
    let center = tf.apply((e, e));
    debug_assert!((center.0 - body.center.0).abs() < 1e-6);

    canvas.circle(
        MarkKind::Frame,
        center,
        px(e),
        r##"class="plot" fill="#f7f7f7" stroke="#cccccc""##,
    );
    let guide = r##"fill="none" stroke="#bbbbbb" stroke-width="1""##;
    canvas.circle(MarkKind::Axis, center, px(r_outer), guide);
    canvas.circle(MarkKind::Axis, center, px(r_inner), guide);

    let n = spec.slices.len();
    let ring = body.radius_px + TICK_LEN + LABEL_GAP;
    for i in (0..n).step_by(layout.stride) {
        let angle = TAU * i as f64 / n as f64;
        let (s, c) = angle.sin_cos();
        let edge = (center.0 + body.radius_px * s, center.1 - body.radius_px * c);
        let tip = (
            center.0 + (body.radius_px + TICK_LEN) * s,
            center.1 - (body.radius_px + TICK_LEN) * c,
        );
        canvas.line(MarkKind::Tick, edge, tip, r##"stroke="#444444" stroke-width="1""##);
        let anchor = if s > 0.1 {
            Anchor::Start
        } else if s < -0.1 {
            Anchor::End
        } else {
            Anchor::Middle
        };
        let (lx, ly) = (center.0 + ring * s, center.1 - ring * c);
        // Baseline so the glyph box sits outside the ring at the poles.
        let baseline = ly + ASCENT_EM * font * (1.0 - c) / 2.0 - (1.0 - ASCENT_EM) * font * (1.0 + c) / 2.0;
        canvas.text(
            (lx, baseline),
            font,
            anchor,
            &slice_label(spec, i),
            r##"fill="#222222""##,
        );
    }

    match &spec.geometry {
        ChartGeometry::Polygons(rings) => {
            for s in panel_series(spec, panel) {
                let color = spec.color(s);
                let pts: Vec<(f64, f64)> = rings[s].iter().map(|p| polar(p.angle, p.radius)).collect();
                if pts.len() > 1 {
                    canvas.polyline(
                        &pts,
                        &format!(r#"class="ring" fill="none" stroke="{color}" stroke-width="2""#),
                    );
                }
                let series = &spec.series[s];
                for (i, p) in rings[s].iter().take(series.points.len()).enumerate() {
                    let c = polar(p.angle, p.radius);
                    if series.out_of_range.contains(&i) {
                        canvas.circle(
                            MarkKind::Point,
                            c,
                            EXCURSION_R,
                            &format!(r##"class="excursion" fill="#ffffff" stroke="{color}" stroke-width="2""##),
                        );
                    } else {
                        canvas.circle(MarkKind::Point, c, POINT_R, &format!(r#"fill="{color}""#));
                    }
                }
            }
        }
        ChartGeometry::Bars(bars) => {
            let shown = panel_series(spec, panel);
            for bar in bars.iter().filter(|b| shown.contains(&b.series)) {
                let color = spec.color(bar.series);
                let excursion = spec.series[bar.series]
                    .points
                    .iter()
                    .position(|p| p.t as usize == bar.slice)
                    .is_some_and(|i| spec.series[bar.series].out_of_range.contains(&i));
                let class = if excursion { "bar excursion" } else { "bar" };
                canvas.sector(
                    center,
                    (px(bar.inner_radius), px(bar.outer_radius)),
                    (bar.start_angle, bar.end_angle),
                    &format!(r#"class="{class}" fill="{color}""#),
                );
            }
        }
        ChartGeometry::Segments(_) => {}
    }
}

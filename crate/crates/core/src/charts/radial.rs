use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use super::{ChartError, Series};

/// Inner radius as a fraction of the outer radius.
pub const DEFAULT_INNER_RATIO: f64 = 0.1;

/// Angular gap between neighbouring radial bars, in radians.
pub const BAR_GAP: f64 = 0.01;

/// Angle in radians, clockwise from 12 o'clock.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolarPoint {
    pub angle: f64,
    pub radius: f64,
}

/// An annular sector for one (series, slice) pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadialBar {
    pub series: usize,
    pub slice: usize,
    pub start_angle: f64,
    pub end_angle: f64,
    pub inner_radius: f64,
    pub outer_radius: f64,
}

pub(super) fn default_radii() -> (f64, f64) {
    (DEFAULT_INNER_RATIO, 1.0)
}

/// Slot `index` of `slots` at angle `2π·index/slots`; the value maps
/// affinely from `[vmin, vmax]` onto `[r_inner, r_outer]` without clamping.
pub fn radial_point(
    index: usize,
    slots: usize,
    value: f64,
    vmin: f64,
    vmax: f64,
    r_inner: f64,
    r_outer: f64,
) -> Result<PolarPoint, ChartError> {
    if index >= slots {
        return Err(ChartError::InvalidRadialInput(format!(
            "index {index} outside {slots} slots"
        )));
    }
    if !(0.0 <= r_inner && r_inner < r_outer) {
        return Err(ChartError::InvalidRadialInput(format!(
            "radii must satisfy 0 <= inner < outer, got {r_inner}, {r_outer}"
        )));
    }
    if !(vmin < vmax) {
        return Err(ChartError::DegenerateValueRange { vmin, vmax });
    }
    let f = (value - vmin) / (vmax - vmin);
    Ok(PolarPoint {
        angle: TAU * index as f64 / slots as f64,
        // Two-sided form so f = 0 and f = 1 land exactly on the radii.
        radius: r_inner * (1.0 - f) + r_outer * f,
    })
}

/// Bars interleave series inside each slice: slot `k·S + s`.
pub(super) fn bars(
    series: &[Series],
    slices: usize,
    (vmin, vmax): (f64, f64),
    (r_inner, r_outer): (f64, f64),
) -> Result<Vec<RadialBar>, ChartError> {
    let slots = slices * series.len();
    let pitch = TAU / slots as f64;
    let gap = if pitch >= 4.0 * BAR_GAP { BAR_GAP } else { pitch / 4.0 };
    let mut out = Vec::new();
    for k in 0..slices {
        for (s, ser) in series.iter().enumerate() {
            let Some(p) = ser.points.iter().find(|p| p.t as usize == k) else {
                continue;
            };
            let slot = k * series.len() + s;
            let polar = radial_point(slot, slots, p.v, vmin, vmax, r_inner, r_outer)?;
            let start_angle = polar.angle + gap / 2.0;
            out.push(RadialBar {
                series: s,
                slice: k,
                start_angle,
                end_angle: start_angle + pitch - gap,
                inner_radius: r_inner,
                outer_radius: polar.radius,
            });
        }
    }
    Ok(out)
}

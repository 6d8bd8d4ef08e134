//! Lane-based projection and visual-angle geometry.

use thiserror::Error;

/// Floor applied to longitudinal distances before any angle math.
pub const DS_MIN: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("invalid geometry input")]
    InvalidInput,
    #[error("invalid centerline: {0}")]
    InvalidCenterline(&'static str),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StPosition {
    pub s: f64,
    pub t: f64,
}

/// Result of projecting a planar point onto a centerline.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Projection {
    pub position: StPosition,
    /// The point lies beyond either end of the polyline; `s` was clamped.
    pub extrapolated: bool,
    pub segment: usize,
}

pub fn polyline_length(centerline: &[[f64; 2]]) -> f64 {
    centerline
        .windows(2)
        .map(|w| (w[1][0] - w[0][0]).hypot(w[1][1] - w[0][1]))
        .sum()
}

/// Projects `point` onto the closest location of `centerline`.
///
/// `t` is the signed distance to that location, positive to the left of the
/// direction of travel. Beyond the polyline ends `s` clamps to the endpoint and
/// `t` is the perpendicular offset from the end segment's line. Equidistant
/// candidates resolve to the smaller `s`.
pub fn xy_to_st(point: [f64; 2], centerline: &[[f64; 2]]) -> Result<Projection, GeometryError> {
    if centerline.len() < 2 {
        return Err(GeometryError::InvalidCenterline("fewer than 2 points"));
    }
    if !point.iter().all(|c| c.is_finite()) {
        return Err(GeometryError::InvalidInput);
    }
    let last = centerline.len() - 2;
    let mut arc = 0.0;
    let mut best: Option<(f64, Projection)> = None;

    for (i, w) in centerline.windows(2).enumerate() {
        let (a, b) = (w[0], w[1]);
        let d = [b[0] - a[0], b[1] - a[1]];
        let len_sq = d[0] * d[0] + d[1] * d[1];
        if len_sq == 0.0 {
            return Err(GeometryError::InvalidCenterline(
                "repeated consecutive points",
            ));
        }
        let len = len_sq.sqrt();
        let rel = [point[0] - a[0], point[1] - a[1]];
        let u_raw = (rel[0] * d[0] + rel[1] * d[1]) / len_sq;
        let u = u_raw.clamp(0.0, 1.0);
        let off = [rel[0] - u * d[0], rel[1] - u * d[1]];
        let dist_sq = off[0] * off[0] + off[1] * off[1];

        if best.as_ref().is_none_or(|(bd, _)| dist_sq < *bd) {
            let cross_rel = d[0] * rel[1] - d[1] * rel[0];
            let extrapolated = (i == 0 && u_raw < 0.0) || (i == last && u_raw > 1.0);
            let t = if extrapolated {
                cross_rel / len
            } else {
                let cross = d[0] * off[1] - d[1] * off[0];
                dist_sq
                    .sqrt()
                    .copysign(if cross < 0.0 { -1.0 } else { 1.0 })
            };
            let proj = Projection {
                position: StPosition {
                    s: arc + u * len,
                    t,
                },
                extrapolated,
                segment: i,
            };
            best = Some((dist_sq, proj));
        }
        arc += len;
    }
    Ok(best.expect("at least one segment").1)
}

/// Inverse of [`xy_to_st`] for points within the polyline span.
pub fn st_to_xy(pos: StPosition, centerline: &[[f64; 2]]) -> Result<[f64; 2], GeometryError> {
    if centerline.len() < 2 {
        return Err(GeometryError::InvalidCenterline("fewer than 2 points"));
    }
    let mut remaining = pos.s.max(0.0);
    let n = centerline.len() - 1;
    for (i, w) in centerline.windows(2).enumerate() {
        let (a, b) = (w[0], w[1]);
        let d = [b[0] - a[0], b[1] - a[1]];
        let len = d[0].hypot(d[1]);
        if remaining <= len || i == n - 1 {
            let u = remaining / len;
            let normal = [-d[1] / len, d[0] / len];
            return Ok([
                a[0] + u * d[0] + pos.t * normal[0],
                a[1] + u * d[1] + pos.t * normal[1],
            ]);
        }
        remaining -= len;
    }
    unreachable!("loop returns on the last segment")
}

fn check(values: &[f64], width: f64) -> Result<(), GeometryError> {
    if values.iter().all(|v| v.is_finite()) && width.is_finite() && width > 0.0 {
        Ok(())
    } else {
        Err(GeometryError::InvalidInput)
    }
}

/// Angle subtended at the driver by the rear of a vehicle of `width`,
/// `ds` ahead and `dt` to the side.
///
/// Evaluated as the angle between the rays to the two rear corners, which is
/// the law-of-cosines angle written without the `acos` cancellation.
pub fn visual_angle(ds: f64, dt: f64, width: f64) -> Result<f64, GeometryError> {
    check(&[ds, dt], width)?;
    let ds = ds.max(DS_MIN);
    Ok((ds * width).atan2(ds * ds + dt * dt - 0.25 * width * width))
}

/// Straight-ahead distance that subtends the same visual angle.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EffectiveDistance {
    pub value: f64,
    /// The corner distances were numerically degenerate; `value` is the floor.
    pub degenerate: bool,
}

/// Effective distance of a vehicle ahead with its lateral offset scaled by `zeta`.
///
/// Uses `W/2 * sqrt(((d1+d2)^2 - W^2) / (W^2 - (d1-d2)^2))` with the
/// differences expanded so neither factor cancels catastrophically.
pub fn effective_distance(
    ds: f64,
    dt: f64,
    width: f64,
    zeta: f64,
) -> Result<EffectiveDistance, GeometryError> {
    check(&[ds, dt, zeta], width)?;
    if zeta <= 0.0 {
        return Err(GeometryError::InvalidInput);
    }
    let ds = ds.max(DS_MIN);
    let lat = zeta * dt.abs();
    let half = 0.5 * width;

    let near = (lat - half).abs();
    let far = lat + half;
    let d1 = ds.hypot(far);
    let d2 = ds.hypot(near);
    let sum = d1 + d2;
    // d1 - far and d2 - near without subtraction.
    let excess = ds * ds / (d1 + far) + ds * ds / (d2 + near);

    let (sum_minus_w, sum_minus_2lat) = if lat >= half {
        (excess + 2.0 * lat - width, excess)
    } else {
        (excess, excess + width - 2.0 * lat)
    };
    let diff = 2.0 * lat * width / sum;
    let numerator = sum_minus_w * (sum + width);
    let denominator = (width * sum_minus_2lat / sum) * (width + diff);

    let ratio = numerator / denominator;
    if !(denominator > 0.0) || !ratio.is_finite() {
        return Ok(EffectiveDistance {
            value: DS_MIN,
            degenerate: true,
        });
    }
    Ok(EffectiveDistance {
        value: half * ratio.sqrt(),
        degenerate: false,
    })
}

/// Effective distance recovered from a visual angle: `W/2 * sqrt(-(cos+1)/(cos-1))`.
pub fn effective_distance_from_angle(theta: f64, width: f64) -> f64 {
    let c = theta.cos();
    0.5 * width * (-(c + 1.0) / (c - 1.0)).sqrt()
}

/// Backward-difference rate of the visual angle; zero without a previous value.
pub fn visual_angle_rate(theta_now: f64, theta_prev: Option<f64>, step: f64) -> f64 {
    match theta_prev {
        Some(prev) if step > 0.0 => (theta_now - prev) / step,
        _ => 0.0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * b.abs().max(1.0)
    }

    #[test]
    fn straight_projection() {
        let line = [[0.0, 0.0], [100.0, 0.0]];
        let p = xy_to_st([10.0, 1.5], &line).unwrap();
        assert_eq!(p.position, StPosition { s: 10.0, t: 1.5 });
        assert!(!p.extrapolated);
        let o = xy_to_st([0.0, 0.0], &line).unwrap();
        assert_eq!(o.position, StPosition { s: 0.0, t: 0.0 });
        let r = xy_to_st([30.0, -2.0], &line).unwrap();
        assert_eq!(r.position.t, -2.0);
    }

    #[test]
    fn projection_beyond_ends_is_flagged() {
        let line = [[0.0, 0.0], [100.0, 0.0]];
        let p = xy_to_st([-5.0, 1.0], &line).unwrap();
        assert!(p.extrapolated);
        assert_eq!(p.position, StPosition { s: 0.0, t: 1.0 });
        let q = xy_to_st([105.0, -2.0], &line).unwrap();
        assert!(q.extrapolated);
        assert_eq!(q.position, StPosition { s: 100.0, t: -2.0 });
    }

    /// Dense-sampling nearest point at 1 mm resolution.
    fn brute_force(point: [f64; 2], line: &[[f64; 2]]) -> (f64, f64) {
        let mut best = (f64::INFINITY, 0.0);
        let mut arc = 0.0;
        for w in line.windows(2) {
            let len = (w[1][0] - w[0][0]).hypot(w[1][1] - w[0][1]);
            let n = (len / 0.001).round() as usize;
            for k in 0..=n {
                let u = k as f64 / n as f64;
                let x = w[0][0] + u * (w[1][0] - w[0][0]);
                let y = w[0][1] + u * (w[1][1] - w[0][1]);
                let d = (point[0] - x).hypot(point[1] - y);
                if d < best.0 {
                    best = (d, arc + u * len);
                }
            }
            arc += len;
        }
        best
    }

    #[test]
    fn right_angle_vertex_matches_dense_sampling() {
        let line = [[0.0, 0.0], [10.0, 0.0], [10.0, 10.0]];
        for point in [
            [9.0, 0.8],
            [10.6, -0.4],
            [9.7, 1.2],
            [11.0, 5.0],
            [8.0, 0.3],
        ] {
            let p = xy_to_st(point, &line).unwrap();
            let (dist, s) = brute_force(point, &line);
            assert!(
                (p.position.s - s).abs() < 2e-3,
                "{point:?}: {} vs {s}",
                p.position.s
            );
            assert!((p.position.t.abs() - dist).abs() < 1e-3);
        }
        // inside the corner is left of travel, outside is right
        assert!(xy_to_st([9.0, 0.8], &line).unwrap().position.t > 0.0);
        assert!(xy_to_st([10.6, -0.4], &line).unwrap().position.t < 0.0);
    }

    #[test]
    fn equidistant_tie_takes_smaller_s() {
        // (9, 1) is 1 m from both legs of the corner.
        let line = [[0.0, 0.0], [10.0, 0.0], [10.0, 10.0]];
        let p = xy_to_st([9.0, 1.0], &line).unwrap();
        assert_eq!(p.segment, 0);
        assert_eq!(p.position.s, 9.0);
    }

    #[test]
    fn st_round_trip_on_polyline() {
        let line = [[0.0, 0.0], [50.0, 10.0], [120.0, -5.0]];
        let pos = StPosition { s: 80.0, t: 1.2 };
        let xy = st_to_xy(pos, &line).unwrap();
        let back = xy_to_st(xy, &line).unwrap().position;
        assert!(close(back.s, pos.s, 1e-9) && close(back.t, pos.t, 1e-9));
    }

    #[test]
    fn visual_angle_on_axis() {
        let theta = visual_angle(20.0, 0.0, 2.0).unwrap();
        assert!(close(theta, 2.0 * (1.0f64 / 20.0).atan(), 1e-12));
        assert!((theta - 0.09992).abs() < 1e-5);
        assert!(visual_angle(1e7, 3.0, 2.0).unwrap() < 1e-6);
        assert_eq!(
            visual_angle(f64::NAN, 0.0, 2.0),
            Err(GeometryError::InvalidInput)
        );
        assert_eq!(
            visual_angle(5.0, 0.0, 0.0),
            Err(GeometryError::InvalidInput)
        );
    }

    #[test]
    fn effective_distance_examples() {
        let on_axis = effective_distance(20.0, 0.0, 2.0, 1.0).unwrap();
        assert!(close(on_axis.value, 20.0, 1e-12));
        // Frozen from the acos chain evaluated independently.
        let offset = effective_distance(20.0, 2.0, 2.0, 1.0).unwrap();
        assert!(close(offset.value, 20.199506160796, 1e-9));
        let alongside = effective_distance(2.0, 3.0, 2.0, 1.0).unwrap();
        assert!(close(alongside.value, 6.162277660168, 1e-9));
        assert!(!alongside.degenerate);
    }

    #[test]
    fn tiny_ds_is_clamped() {
        let a = effective_distance(0.0, 4.0, 2.0, 1.0).unwrap();
        let b = effective_distance(DS_MIN, 4.0, 2.0, 1.0).unwrap();
        assert_eq!(a, b);
        assert!(a.value.is_finite() && !a.degenerate);
    }

    #[test]
    fn rate_examples() {
        assert_eq!(visual_angle_rate(0.1, Some(0.1), 0.1), 0.0);
        assert!(close(visual_angle_rate(0.12, Some(0.10), 0.1), 0.2, 1e-12));
        assert_eq!(visual_angle_rate(0.12, None, 0.1), 0.0);
        let far = visual_angle(30.0, 1.0, 2.0).unwrap();
        let near = visual_angle(29.0, 1.0, 2.0).unwrap();
        assert!(visual_angle_rate(near, Some(far), 0.1) > 0.0);
    }

    proptest! {
        #[test]
        fn matches_angle_route(ds in 0.5f64..100.0, dt in -10.0f64..10.0, w in 1.0f64..3.0) {
            let theta = visual_angle(ds, dt, w).unwrap();
            let via_angle = effective_distance_from_angle(theta, w);
            let direct = effective_distance(ds, dt, w, 1.0).unwrap().value;
            prop_assert!(close(direct, via_angle, 1e-6));
        }

        #[test]
        fn identity_on_axis(ds in 0.1f64..500.0, w in 0.5f64..4.0, zeta in 0.1f64..3.0) {
            let d = effective_distance(ds, 0.0, w, zeta).unwrap().value;
            prop_assert!((d - ds).abs() <= 1e-9 * ds);
        }

        #[test]
        fn monotone_in_lateral_offset(ds in 0.5f64..100.0, a in 0.0f64..10.0, b in 0.0f64..10.0, w in 1.0f64..3.0) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let d_lo = effective_distance(ds, lo, w, 1.0).unwrap().value;
            let d_hi = effective_distance(ds, -hi, w, 1.0).unwrap().value;
            prop_assert!(d_hi >= d_lo * (1.0 - 1e-12));
        }

        #[test]
        fn monotone_in_zeta(ds in 0.5f64..100.0, dt in 0.1f64..10.0, z1 in 0.1f64..3.0, z2 in 0.1f64..3.0, w in 1.0f64..3.0) {
            let (lo, hi) = if z1 <= z2 { (z1, z2) } else { (z2, z1) };
            let d_lo = effective_distance(ds, dt, w, lo).unwrap().value;
            let d_hi = effective_distance(ds, dt, w, hi).unwrap().value;
            prop_assert!(d_hi >= d_lo * (1.0 - 1e-12));
        }

        #[test]
        fn angle_decreases_past_its_peak(ds in 0.2f64..100.0, extra in 0.01f64..10.0, dt in -10.0f64..10.0, w in 1.0f64..3.0) {
            // The angle peaks at ds^2 = dt^2 - w^2/4 and falls off beyond.
            prop_assume!(ds * ds >= dt * dt - 0.25 * w * w);
            prop_assert!(visual_angle(ds + extra, dt, w).unwrap() < visual_angle(ds, dt, w).unwrap());
        }

        #[test]
        fn corner_distances_obey_triangle_bound(ds in 0.0f64..100.0, dt in -10.0f64..10.0, w in 0.5f64..3.0) {
            let d1 = ds.hypot(dt + w / 2.0);
            let d2 = ds.hypot(dt - w / 2.0);
            prop_assert!((d1 - d2).abs() <= w + 1e-12);
            if ds > 1e-3 {
                prop_assert!((d1 - d2).abs() < w);
            }
        }
    }
}

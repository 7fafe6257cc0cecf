//! 2D ray and overlap tests.

pub type Vec2 = [f64; 2];

/// Distance along a unit-direction ray to where it enters the axis-aligned
/// box `[min, max]` (slab method). `None` if the ray misses, or if it starts
/// inside the box.
pub fn ray_aabb(origin: Vec2, dir: Vec2, min: Vec2, max: Vec2) -> Option<f64> {
    let mut t_enter = f64::NEG_INFINITY;
    let mut t_exit = f64::INFINITY;
    for a in 0..2 {
        if dir[a] == 0.0 {
            if origin[a] < min[a] || origin[a] > max[a] {
                return None;
            }
            continue;
        }
        let inv = 1.0 / dir[a];
        let (t0, t1) = {
            let t0 = (min[a] - origin[a]) * inv;
            let t1 = (max[a] - origin[a]) * inv;
            if t0 <= t1 {
                (t0, t1)
            } else {
                (t1, t0)
            }
        };
        t_enter = t_enter.max(t0);
        t_exit = t_exit.min(t1);
    }
    if t_enter > t_exit || t_enter < 0.0 {
        None
    } else {
        Some(t_enter)
    }
}

/// Distance along a unit-direction ray from a point inside `[min, max]` to
/// the boundary.
pub fn ray_exit_aabb(origin: Vec2, dir: Vec2, min: Vec2, max: Vec2) -> f64 {
    let mut t = f64::INFINITY;
    for a in 0..2 {
        if dir[a] > 0.0 {
            t = t.min((max[a] - origin[a]) / dir[a]);
        } else if dir[a] < 0.0 {
            t = t.min((min[a] - origin[a]) / dir[a]);
        }
    }
    t.max(0.0)
}

/// Distance along a unit-direction ray to the first hit on a circle. `None`
/// on a miss or when the ray starts inside the circle.
pub fn ray_circle(origin: Vec2, dir: Vec2, center: Vec2, radius: f64) -> Option<f64> {
    let oc = [origin[0] - center[0], origin[1] - center[1]];
    let c = oc[0] * oc[0] + oc[1] * oc[1] - radius * radius;
    if c < 0.0 {
        return None;
    }
    let b = oc[0] * dir[0] + oc[1] * dir[1];
    let disc = b * b - c;
    if disc < 0.0 {
        return None;
    }
    let t = -b - disc.sqrt();
    (t >= 0.0).then_some(t)
}

/// Euclidean distance from `p` to the box `[center ± half]` (0 inside).
pub fn point_rect_distance(p: Vec2, center: Vec2, half: Vec2) -> f64 {
    let dx = ((p[0] - center[0]).abs() - half[0]).max(0.0);
    let dy = ((p[1] - center[1]).abs() - half[1]).max(0.0);
    dx.hypot(dy)
}

pub fn distance(a: Vec2, b: Vec2) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// Wrap an angle into `(−π, π]`.
pub fn wrap_angle(a: f64) -> f64 {
    use std::f64::consts::PI;
    let w = a.rem_euclid(2.0 * PI);
    if w > PI {
        w - 2.0 * PI
    } else {
        w
    }
}

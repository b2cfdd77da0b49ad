//! Dielectric optics. Directions follow one convention throughout: `w_in`
//! points away from the surface toward the viewer, on the same side as `n`.

use crate::math::Vec3;

/// Schlick's approximation for light arriving from a medium of index `eta_out`
/// onto one of index `eta_in`. Matched indices reflect nothing at any angle.
pub fn fresnel_schlick(cos_theta: f64, eta_out: f64, eta_in: f64) -> f64 {
    let f0 = reflectance_at_normal(eta_out, eta_in);
    if f0 == 0.0 {
        return 0.0;
    }
    let m = (1.0 - cos_theta.clamp(0.0, 1.0)).powi(5);
    f0 + (1.0 - f0) * m
}

pub fn reflectance_at_normal(eta_out: f64, eta_in: f64) -> f64 {
    let r = (eta_out - eta_in) / (eta_out + eta_in);
    r * r
}

/// Derivative of [`fresnel_schlick`] from air (`eta_out = 1`) with respect to `eta_in`.
pub fn fresnel_schlick_d_eta(cos_theta: f64, eta: f64) -> f64 {
    let r = (1.0 - eta) / (1.0 + eta);
    let dr = -2.0 / ((1.0 + eta) * (1.0 + eta));
    let m = (1.0 - cos_theta.clamp(0.0, 1.0)).powi(5);
    2.0 * r * dr * (1.0 - m)
}

/// Mirror direction `2(w·n)n − w`.
pub fn reflect(w_in: &Vec3, n: &Vec3) -> Vec3 {
    n * (2.0 * w_in.dot(n)) - w_in
}

/// Transmitted direction for `eta_ratio = η_incident / η_transmitted`, or
/// `None` on total internal reflection.
pub fn refract(w_in: &Vec3, n: &Vec3, eta_ratio: f64) -> Option<Vec3> {
    let cos_i = w_in.dot(n);
    let sin2_t = eta_ratio * eta_ratio * (1.0 - cos_i * cos_i).max(0.0);
    if sin2_t > 1.0 {
        return None;
    }
    let cos_t = (1.0 - sin2_t).sqrt();
    Some(-w_in * eta_ratio + n * (eta_ratio * cos_i - cos_t))
}

/// Tangent of [`reflect`] along `(dw, dn)`.
pub fn reflect_jvp(w_in: &Vec3, n: &Vec3, dw: &Vec3, dn: &Vec3) -> Vec3 {
    let c = w_in.dot(n);
    let dc = dw.dot(n) + w_in.dot(dn);
    n * (2.0 * dc) + dn * (2.0 * c) - dw
}

/// [`refract`] and its tangent along `(dw, dn, d_eta)`.
pub fn refract_jvp(w_in: &Vec3, n: &Vec3, eta: f64, dw: &Vec3, dn: &Vec3, d_eta: f64) -> Option<(Vec3, Vec3)> {
    let c = w_in.dot(n);
    let dc = dw.dot(n) + w_in.dot(dn);
    let s = 1.0 - eta * eta * (1.0 - c * c);
    if s < 0.0 {
        return None;
    }
    let ct = s.sqrt();
    let ds = -2.0 * eta * d_eta * (1.0 - c * c) + 2.0 * eta * eta * c * dc;
    let dct = if ct > 0.0 { ds / (2.0 * ct) } else { 0.0 };
    let w_t = -w_in * eta + n * (eta * c - ct);
    let dw_t = -w_in * d_eta - dw * eta + n * (d_eta * c + eta * dc - dct) + dn * (eta * c - ct);
    Some((w_t, dw_t))
}

use crate::error::{Error, Result};
use crate::math::{covariance_from_shape, is_finite3, Mat3, Quat, Vec3, UNIT_TOLERANCE};
use crate::sh::{dc_from_color, ShCoeffs};

pub const IOR_MIN: f64 = 1.0;
pub const IOR_MAX: f64 = 3.0;

/// Surface and material attributes carried by every primitive.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransparentAttributes {
    pub normal: Vec3,
    pub roughness: f64,
    pub metallic: f64,
    pub transparency: f64,
    pub ior: f64,
    pub base_color: [f64; 3],
}

impl Default for TransparentAttributes {
    /// Opaque white dielectric facing `+z`.
    fn default() -> Self {
        TransparentAttributes {
            normal: Vec3::z(),
            roughness: 0.0,
            metallic: 0.0,
            transparency: 0.0,
            ior: 1.5,
            base_color: [1.0; 3],
        }
    }
}

impl TransparentAttributes {
    pub fn glass(normal: Vec3, ior: f64, base_color: [f64; 3]) -> Self {
        TransparentAttributes {
            normal,
            transparency: 1.0,
            ior,
            base_color,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !is_finite3(&self.normal) || (self.normal.norm() - 1.0).abs() > UNIT_TOLERANCE {
            return Err(Error::invalid(format!("normal {:?} is not unit length", self.normal)));
        }
        for (name, v) in [
            ("roughness", self.roughness),
            ("metallic", self.metallic),
            ("transparency", self.transparency),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::invalid(format!("{name} {v} outside [0, 1]")));
            }
        }
        if !(IOR_MIN..=IOR_MAX).contains(&self.ior) {
            return Err(Error::invalid(format!("ior {} outside [{IOR_MIN}, {IOR_MAX}]", self.ior)));
        }
        if self.base_color.iter().any(|c| !(0.0..=1.0).contains(c)) {
            return Err(Error::invalid(format!("base color {:?} outside [0, 1]", self.base_color)));
        }
        Ok(())
    }

    /// Re-project every attribute into its valid range.
    pub fn project(&mut self) {
        let n = self.normal.norm();
        self.normal = if n > 1e-12 && n.is_finite() { self.normal / n } else { Vec3::z() };
        self.roughness = self.roughness.clamp(0.0, 1.0);
        self.metallic = self.metallic.clamp(0.0, 1.0);
        self.transparency = self.transparency.clamp(0.0, 1.0);
        self.ior = self.ior.clamp(IOR_MIN, IOR_MAX);
        for c in self.base_color.iter_mut() {
            *c = c.clamp(0.0, 1.0);
        }
    }
}

/// A 3D Gaussian with view-dependent color and transparent-material attributes.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianPrimitive {
    pub position: Vec3,
    pub scale: Vec3,
    pub rotation: Quat,
    pub opacity: f64,
    pub sh: ShCoeffs,
    pub attrs: TransparentAttributes,
}

impl GaussianPrimitive {
    pub fn new(
        position: Vec3,
        scale: Vec3,
        rotation: Quat,
        opacity: f64,
        sh: ShCoeffs,
        attrs: TransparentAttributes,
    ) -> Result<Self> {
        let p = GaussianPrimitive {
            position,
            scale,
            rotation,
            opacity,
            sh,
            attrs,
        };
        p.validate()?;
        Ok(p)
    }

    /// Isotropic primitive with a constant color.
    pub fn isotropic(position: Vec3, sigma: f64, opacity: f64, color: [f64; 3]) -> Self {
        GaussianPrimitive {
            position,
            scale: Vec3::repeat(sigma),
            rotation: Quat::identity(),
            opacity,
            sh: dc_from_color(color),
            attrs: TransparentAttributes::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !is_finite3(&self.position) {
            return Err(Error::invalid("non-finite position"));
        }
        if !is_finite3(&self.scale) || self.scale.iter().any(|&s| s <= 0.0) {
            return Err(Error::invalid(format!("scale {:?} must be positive", self.scale)));
        }
        if (self.rotation.coords.norm() - 1.0).abs() > UNIT_TOLERANCE {
            return Err(Error::invalid("rotation quaternion is not unit length"));
        }
        if !(0.0..=1.0).contains(&self.opacity) {
            return Err(Error::invalid(format!("opacity {} outside [0, 1]", self.opacity)));
        }
        self.attrs.validate()
    }

    pub fn covariance(&self) -> Result<Mat3> {
        covariance_from_shape(&self.scale, &self.rotation)
    }

    /// Rotated axis of the smallest scale.
    pub fn thinnest_axis(&self) -> Vec3 {
        let (mut k, mut best) = (0, f64::INFINITY);
        for (i, &s) in self.scale.iter().enumerate() {
            if s < best {
                best = s;
                k = i;
            }
        }
        let mut axis = Vec3::zeros();
        axis[k] = 1.0;
        self.rotation * axis
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validation_catches_ranges() {
        let mut p = GaussianPrimitive::isotropic(Vec3::zeros(), 0.1, 0.5, [0.2, 0.3, 0.4]);
        assert!(p.validate().is_ok());
        p.opacity = 1.5;
        assert!(p.validate().is_err());
        p.opacity = 0.5;
        p.attrs.ior = 0.5;
        assert!(p.validate().is_err());
        p.attrs.project();
        assert_eq!(p.attrs.ior, IOR_MIN);
        assert!(p.validate().is_ok());
    }

    #[test]
    fn thinnest_axis_follows_rotation() {
        let mut p = GaussianPrimitive::isotropic(Vec3::zeros(), 1.0, 1.0, [0.5; 3]);
        p.scale = Vec3::new(1.0, 1.0, 0.01);
        p.rotation = crate::math::rotation_to_normal(&Vec3::x());
        assert!((p.thinnest_axis() - Vec3::x()).norm() < 1e-12);
    }
}

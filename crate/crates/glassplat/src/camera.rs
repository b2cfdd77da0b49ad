use crate::error::{Error, Result};
use crate::math::{is_finite3, is_unit, Mat3, Vec3};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ray {
    pub origin: Vec3,
    pub dir: Vec3,
}

impl Ray {
    /// Checked constructor: `dir` must already be unit length.
    pub fn new(origin: Vec3, dir: Vec3) -> Result<Self> {
        if !is_finite3(&origin) || !is_unit(&dir) {
            return Err(Error::invalid(format!("ray direction {dir:?} is not unit length")));
        }
        Ok(Ray { origin, dir })
    }

    /// Normalizes `dir`.
    pub fn towards(origin: Vec3, dir: Vec3) -> Self {
        Ray { origin, dir: dir.normalize() }
    }

    pub fn at(&self, t: f64) -> Vec3 {
        self.origin + self.dir * t
    }
}

/// Pinhole camera. Camera space looks down `+z` with `x` right and `y` down;
/// pixel `(i, j)` has its center at `(i + 0.5, j + 0.5)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Camera {
    /// World-to-camera rotation.
    pub rotation: Mat3,
    /// World-to-camera translation: `x_cam = R x + t`.
    pub translation: Vec3,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

impl Camera {
    pub fn new(
        rotation: Mat3,
        translation: Vec3,
        focal: (f64, f64),
        principal: (f64, f64),
        width: usize,
        height: usize,
    ) -> Result<Self> {
        let c = Camera {
            rotation,
            translation,
            fx: focal.0,
            fy: focal.1,
            cx: principal.0,
            cy: principal.1,
            width,
            height,
        };
        c.validate()?;
        Ok(c)
    }

    /// Camera at `eye` looking at `target` with world-space `up`, vertical field of view in degrees.
    pub fn look_at(eye: Vec3, target: Vec3, up: Vec3, fov_y_deg: f64, width: usize, height: usize) -> Result<Self> {
        let forward = target - eye;
        if forward.norm() < 1e-12 {
            return Err(Error::invalid("eye and target coincide"));
        }
        let z = forward.normalize();
        let x = z.cross(&up);
        if x.norm() < 1e-9 {
            return Err(Error::invalid("up vector is parallel to the view direction"));
        }
        let x = x.normalize();
        let y = z.cross(&x);
        let rotation = Mat3::from_rows(&[x.transpose(), y.transpose(), z.transpose()]);
        let translation = -(rotation * eye);
        let f = 0.5 * height as f64 / (0.5 * fov_y_deg.to_radians()).tan();
        Camera::new(
            rotation,
            translation,
            (f, f),
            (0.5 * width as f64, 0.5 * height as f64),
            width,
            height,
        )
    }

    /// Camera on a sphere around `target`; azimuth 0 sits on the `−z` side.
    pub fn orbit(target: Vec3, radius: f64, azimuth_deg: f64, elevation_deg: f64, fov_y_deg: f64, width: usize, height: usize) -> Result<Self> {
        let (az, el) = (azimuth_deg.to_radians(), elevation_deg.to_radians());
        let offset = Vec3::new(-az.sin() * el.cos(), el.sin(), -az.cos() * el.cos()) * radius;
        Camera::look_at(target + offset, target, Vec3::y(), fov_y_deg, width, height)
    }

    /// `count` orbit cameras evenly spaced in azimuth at one elevation.
    pub fn ring(target: Vec3, radius: f64, elevation_deg: f64, count: usize, fov_y_deg: f64, width: usize, height: usize) -> Result<Vec<Self>> {
        (0..count)
            .map(|k| Camera::orbit(target, radius, 360.0 * k as f64 / count as f64, elevation_deg, fov_y_deg, width, height))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::invalid("camera resolution must be positive"));
        }
        let rrt = self.rotation * self.rotation.transpose();
        if (rrt - Mat3::identity()).abs().max() > 1e-6 || self.rotation.determinant() < 0.0 {
            return Err(Error::invalid("camera rotation is not orthonormal"));
        }
        if !(self.fx > 0.0 && self.fy > 0.0) {
            return Err(Error::invalid("focal lengths must be positive"));
        }
        Ok(())
    }

    pub fn center(&self) -> Vec3 {
        -(self.rotation.transpose() * self.translation)
    }

    pub fn forward(&self) -> Vec3 {
        self.rotation.row(2).transpose()
    }

    pub fn world_to_camera(&self, p: &Vec3) -> Vec3 {
        self.rotation * p + self.translation
    }

    pub fn camera_to_world_dir(&self, d: &Vec3) -> Vec3 {
        self.rotation.transpose() * d
    }

    /// Continuous pixel coordinates of a camera-space point.
    pub fn project_camera(&self, pc: &Vec3) -> (f64, f64) {
        (self.fx * pc.x / pc.z + self.cx, self.fy * pc.y / pc.z + self.cy)
    }

    /// World-space ray through continuous pixel coordinates `(px, py)`.
    pub fn ray_through(&self, px: f64, py: f64) -> Ray {
        let d = Vec3::new((px - self.cx) / self.fx, (py - self.cy) / self.fy, 1.0);
        Ray::towards(self.center(), self.camera_to_world_dir(&d))
    }

    /// Ray through the center of pixel `(i, j)`.
    pub fn pixel_ray(&self, i: usize, j: usize) -> Ray {
        self.ray_through(i as f64 + 0.5, j as f64 + 0.5)
    }

    pub fn with_resolution(&self, width: usize, height: usize) -> Camera {
        let sx = width as f64 / self.width as f64;
        let sy = height as f64 / self.height as f64;
        Camera {
            fx: self.fx * sx,
            fy: self.fy * sy,
            cx: self.cx * sx,
            cy: self.cy * sy,
            width,
            height,
            ..*self
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn look_at_centers_target() {
        let cam = Camera::look_at(Vec3::new(1.0, 2.0, 3.0), Vec3::zeros(), Vec3::y(), 60.0, 64, 48).unwrap();
        let pc = cam.world_to_camera(&Vec3::zeros());
        let (u, v) = cam.project_camera(&pc);
        assert!((u - 32.0).abs() < 1e-9 && (v - 24.0).abs() < 1e-9);
        assert!((cam.center() - Vec3::new(1.0, 2.0, 3.0)).norm() < 1e-12);
        // world up projects upward on screen (smaller row index)
        let (_, v_up) = cam.project_camera(&cam.world_to_camera(&Vec3::new(0.0, 0.1, 0.0)));
        assert!(v_up < 24.0);
    }

    #[test]
    fn pixel_ray_hits_projected_point() {
        let cam = Camera::look_at(Vec3::new(0.0, 0.0, -5.0), Vec3::zeros(), Vec3::y(), 45.0, 32, 32).unwrap();
        let p = Vec3::new(0.3, -0.2, 0.7);
        let (u, v) = cam.project_camera(&cam.world_to_camera(&p));
        let r = cam.ray_through(u, v);
        let to_p = (p - r.origin).normalize();
        assert!((to_p - r.dir).norm() < 1e-12);
    }

    #[test]
    fn rejects_bad_rotation() {
        let r = Mat3::identity() * 2.0;
        assert!(Camera::new(r, Vec3::zeros(), (1.0, 1.0), (0.0, 0.0), 4, 4).is_err());
        assert!(Ray::new(Vec3::zeros(), Vec3::new(1.0, 1.0, 0.0)).is_err());
    }
}

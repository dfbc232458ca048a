use std::fmt::Write as _;
use std::path::Path;

use super::{GeoError, Ray, Vec3};

/// Georeferenced terrain samples on a regular grid, interpolated bilinearly.
///
/// Sample `(col, row)` sits at `origin + (col, row) * cell_size`; row 0 is the southern
/// edge. Missing samples are NaN and make their adjacent cells transparent to rays.
#[derive(Debug, Clone, PartialEq)]
pub struct HeightField {
    pub origin: [f64; 2],
    pub cell_size: f64,
    pub cols: usize,
    pub rows: usize,
    heights: Vec<f64>,
    nodata: f64,
    min_h: f64,
    max_h: f64,
}

/// Result of casting a ray against the terrain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RayHit {
    Hit { point: Vec3, depth: f64 },
    Sky,
}

impl RayHit {
    pub fn depth(&self) -> Option<f64> {
        match self {
            RayHit::Hit { depth, .. } => Some(*depth),
            RayHit::Sky => None,
        }
    }

    pub fn point(&self) -> Option<Vec3> {
        match self {
            RayHit::Hit { point, .. } => Some(*point),
            RayHit::Sky => None,
        }
    }
}

pub const DEFAULT_NODATA: f64 = -9999.0;

impl HeightField {
    /// `heights` is row-major with the southern row first.
    pub fn new(
        origin: [f64; 2],
        cell_size: f64,
        cols: usize,
        rows: usize,
        heights: Vec<f64>,
    ) -> Result<Self, GeoError> {
        if !(cell_size > 0.0 && cell_size.is_finite()) {
            return Err(GeoError::Grid(format!(
                "cell size must be positive, got {cell_size}"
            )));
        }
        if cols < 2 || rows < 2 {
            return Err(GeoError::Grid(format!(
                "grid needs at least 2x2 samples, got {cols}x{rows}"
            )));
        }
        if heights.len() != cols * rows {
            return Err(GeoError::Grid(format!(
                "expected {} heights, got {}",
                cols * rows,
                heights.len()
            )));
        }
        if heights.iter().any(|h| h.is_infinite()) {
            return Err(GeoError::Grid("heights must be finite or nodata".into()));
        }
        let (mut min_h, mut max_h) = (f64::INFINITY, f64::NEG_INFINITY);
        for &h in heights.iter().filter(|h| !h.is_nan()) {
            min_h = min_h.min(h);
            max_h = max_h.max(h);
        }
        Ok(Self {
            origin,
            cell_size,
            cols,
            rows,
            heights,
            nodata: DEFAULT_NODATA,
            min_h,
            max_h,
        })
    }

    pub fn from_fn(
        origin: [f64; 2],
        cell_size: f64,
        cols: usize,
        rows: usize,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Self, GeoError> {
        let mut h = Vec::with_capacity(cols * rows);
        for r in 0..rows {
            for c in 0..cols {
                h.push(f(
                    origin[0] + c as f64 * cell_size,
                    origin[1] + r as f64 * cell_size,
                ));
            }
        }
        Self::new(origin, cell_size, cols, rows, h)
    }

    pub fn flat(origin: [f64; 2], cell_size: f64, cols: usize, rows: usize, height: f64) -> Self {
        Self::from_fn(origin, cell_size, cols, rows, |_, _| height)
            .expect("flat grid parameters are valid")
    }

    /// Eastern and northern limits of the sampled area.
    pub fn extent(&self) -> [f64; 4] {
        [
            self.origin[0],
            self.origin[1],
            self.origin[0] + (self.cols - 1) as f64 * self.cell_size,
            self.origin[1] + (self.rows - 1) as f64 * self.cell_size,
        ]
    }

    pub fn height_range(&self) -> (f64, f64) {
        (self.min_h, self.max_h)
    }

    /// Sample value, `None` for nodata or out of range.
    pub fn sample(&self, col: usize, row: usize) -> Option<f64> {
        if col >= self.cols || row >= self.rows {
            return None;
        }
        let h = self.heights[row * self.cols + col];
        (!h.is_nan()).then_some(h)
    }

    fn raw(&self, col: usize, row: usize) -> f64 {
        self.heights[row * self.cols + col]
    }

    /// Bilinear height at a world position.
    pub fn height_at(&self, e: f64, n: f64) -> Option<f64> {
        let u = (e - self.origin[0]) / self.cell_size;
        let v = (n - self.origin[1]) / self.cell_size;
        if !(u >= 0.0 && v >= 0.0 && u <= (self.cols - 1) as f64 && v <= (self.rows - 1) as f64) {
            return None;
        }
        let i = (u.floor() as usize).min(self.cols - 2);
        let j = (v.floor() as usize).min(self.rows - 2);
        let (s, r) = (u - i as f64, v - j as f64);
        let [h00, h10, h01, h11] = self.corners(i, j)?;
        Some(h00 * (1.0 - s) * (1.0 - r) + h10 * s * (1.0 - r) + h01 * (1.0 - s) * r + h11 * s * r)
    }

    fn corners(&self, i: usize, j: usize) -> Option<[f64; 4]> {
        let c = [
            self.raw(i, j),
            self.raw(i + 1, j),
            self.raw(i, j + 1),
            self.raw(i + 1, j + 1),
        ];
        (!c.iter().any(|h| h.is_nan())).then_some(c)
    }

    /// First intersection of `ray` with the bilinear terrain surface.
    ///
    /// The ray is marched cell by cell through the grid; inside each cell the height
    /// difference along the ray is a quadratic in the ray parameter and is solved in
    /// closed form.
    pub fn raycast(&self, ray: &Ray) -> Result<RayHit, GeoError> {
        let dir = super::normalize(ray.dir);
        let o = ray.origin;
        if let Some(h) = self.height_at(o[0], o[1]) {
            if o[2] < h {
                return Err(GeoError::OriginBelowTerrain {
                    origin: o,
                    terrain: h,
                });
            }
        }
        if self.min_h > self.max_h {
            return Ok(RayHit::Sky);
        }
        let cs = self.cell_size;
        let u0 = (o[0] - self.origin[0]) / cs;
        let v0 = (o[1] - self.origin[1]) / cs;
        let du = dir[0] / cs;
        let dv = dir[1] / cs;
        let umax = (self.cols - 1) as f64;
        let vmax = (self.rows - 1) as f64;

        let Some((mut t, t_end)) = slab(u0, du, umax)
            .and_then(|a| slab(v0, dv, vmax).map(|b| (a.0.max(b.0).max(0.0), a.1.min(b.1))))
            .filter(|(a, b)| a <= b)
        else {
            return Ok(RayHit::Sky);
        };

        let cell_of = |x: f64, max_cell: usize, dir: f64| -> usize {
            let mut c = x.floor();
            // on a boundary, step into the cell the ray is heading for
            if c == x && dir < 0.0 {
                c -= 1.0;
            }
            (c.max(0.0) as usize).min(max_cell)
        };
        let mut i = cell_of(u0 + t * du, self.cols - 2, du);
        let mut j = cell_of(v0 + t * dv, self.rows - 2, dv);
        let step_i: isize = if du > 0.0 { 1 } else { -1 };
        let step_j: isize = if dv > 0.0 { 1 } else { -1 };
        let next_t = |cell: usize, step: isize, x0: f64, d: f64| -> f64 {
            if d == 0.0 {
                return f64::INFINITY;
            }
            let boundary = if step > 0 {
                cell as f64 + 1.0
            } else {
                cell as f64
            };
            (boundary - x0) / d
        };

        loop {
            let z = o[2] + t * dir[2];
            if dir[2] >= 0.0 && z > self.max_h {
                return Ok(RayHit::Sky);
            }
            let t_exit = next_t(i, step_i, u0, du)
                .min(next_t(j, step_j, v0, dv))
                .min(t_end)
                .max(t);
            if let Some(hit_t) = self.hit_in_cell(i, j, o, dir, [u0, v0, du, dv], t, t_exit) {
                let point = [
                    o[0] + hit_t * dir[0],
                    o[1] + hit_t * dir[1],
                    o[2] + hit_t * dir[2],
                ];
                return Ok(RayHit::Hit {
                    point,
                    depth: hit_t,
                });
            }
            if t_exit >= t_end {
                return Ok(RayHit::Sky);
            }
            let ti = next_t(i, step_i, u0, du);
            let tj = next_t(j, step_j, v0, dv);
            if ti <= tj {
                match i.checked_add_signed(step_i) {
                    Some(n) if n <= self.cols - 2 => i = n,
                    _ => return Ok(RayHit::Sky),
                }
            }
            if tj <= ti {
                match j.checked_add_signed(step_j) {
                    Some(n) if n <= self.rows - 2 => j = n,
                    _ => return Ok(RayHit::Sky),
                }
            }
            t = t_exit;
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn hit_in_cell(
        &self,
        i: usize,
        j: usize,
        o: Vec3,
        dir: Vec3,
        grid: [f64; 4],
        ta: f64,
        tb: f64,
    ) -> Option<f64> {
        let [h00, h10, h01, h11] = self.corners(i, j)?;
        let [u0, v0, du, dv] = grid;
        let z_a = o[2] + ta * dir[2];
        let z_b = o[2] + tb * dir[2];
        let cell_max = h00.max(h10).max(h01).max(h11);
        if z_a.min(z_b) > cell_max {
            return None;
        }
        // local coordinates at the segment start; tau = t - ta
        let s0 = u0 + ta * du - i as f64;
        let r0 = v0 + ta * dv - j as f64;
        let b = h10 - h00;
        let c = h01 - h00;
        let d = h00 - h10 - h01 + h11;
        let q2 = -d * du * dv;
        let q1 = dir[2] - b * du - c * dv - d * (s0 * dv + r0 * du);
        let q0 = z_a - (h00 + b * s0 + c * r0 + d * s0 * r0);
        let len = tb - ta;
        if q0 <= 0.0 {
            return Some(ta);
        }
        let eps = 1e-12 * (1.0 + len);
        let scale = q1.abs().max(q0.abs());
        let roots: [Option<f64>; 2] = if q2.abs() <= 1e-14 * scale.max(1e-300) {
            [(q1 != 0.0).then(|| -q0 / q1), None]
        } else {
            let disc = q1 * q1 - 4.0 * q2 * q0;
            if disc < 0.0 {
                [None, None]
            } else {
                let sq = disc.sqrt();
                // numerically stable root pair
                let sgn = if q1 >= 0.0 { 1.0 } else { -1.0 };
                let qq = -0.5 * (q1 + sgn * sq);
                [(q2 != 0.0).then(|| qq / q2), (qq != 0.0).then(|| q0 / qq)]
            }
        };
        roots
            .into_iter()
            .flatten()
            .filter(|&tau| tau >= -eps && tau <= len + eps)
            .fold(None, |best: Option<f64>, tau| {
                Some(best.map_or(tau, |b| b.min(tau)))
            })
            .map(|tau| ta + tau.clamp(0.0, len))
    }

    /// Reads an ESRI ASCII grid.
    pub fn from_ascii_grid(text: &str) -> Result<Self, GeoError> {
        let mut tokens = text.split_whitespace().peekable();
        let mut ncols = None;
        let mut nrows = None;
        let mut xll: Option<(f64, bool)> = None;
        let mut yll: Option<(f64, bool)> = None;
        let mut cellsize = None;
        let mut nodata = DEFAULT_NODATA;
        while let Some(&tok) = tokens.peek() {
            if tok.parse::<f64>().is_ok() {
                break;
            }
            let key = tok.to_ascii_lowercase();
            tokens.next();
            let val = tokens
                .next()
                .ok_or_else(|| GeoError::Parse(format!("header key `{key}` has no value")))?;
            let num = || {
                val.parse::<f64>()
                    .map_err(|_| GeoError::Parse(format!("bad value `{val}` for `{key}`")))
            };
            match key.as_str() {
                "ncols" => ncols = Some(num()? as usize),
                "nrows" => nrows = Some(num()? as usize),
                "xllcorner" => xll = Some((num()?, true)),
                "xllcenter" => xll = Some((num()?, false)),
                "yllcorner" => yll = Some((num()?, true)),
                "yllcenter" => yll = Some((num()?, false)),
                "cellsize" => cellsize = Some(num()?),
                "nodata_value" => nodata = num()?,
                _ => return Err(GeoError::Parse(format!("unknown header key `{key}`"))),
            }
        }
        let missing = |k: &str| GeoError::Parse(format!("missing header key `{k}`"));
        let ncols = ncols.ok_or_else(|| missing("ncols"))?;
        let nrows = nrows.ok_or_else(|| missing("nrows"))?;
        let cs = cellsize.ok_or_else(|| missing("cellsize"))?;
        let (x, x_corner) = xll.ok_or_else(|| missing("xllcorner"))?;
        let (y, y_corner) = yll.ok_or_else(|| missing("yllcorner"))?;
        let origin = [
            if x_corner { x + cs / 2.0 } else { x },
            if y_corner { y + cs / 2.0 } else { y },
        ];
        let values: Vec<f64> = tokens
            .map(|t| {
                t.parse::<f64>()
                    .map_err(|_| GeoError::Parse(format!("bad height `{t}`")))
            })
            .collect::<Result<_, _>>()?;
        if values.len() != ncols * nrows {
            return Err(GeoError::Parse(format!(
                "expected {} heights, found {}",
                ncols * nrows,
                values.len()
            )));
        }
        // file rows run north to south
        let mut heights = Vec::with_capacity(values.len());
        for r in (0..nrows).rev() {
            heights.extend(values[r * ncols..(r + 1) * ncols].iter().map(|&h| {
                if h == nodata {
                    f64::NAN
                } else {
                    h
                }
            }));
        }
        let mut hf = Self::new(origin, cs, ncols, nrows, heights)?;
        hf.nodata = nodata;
        Ok(hf)
    }

    pub fn to_ascii_grid(&self) -> String {
        let mut s = String::new();
        let cs = self.cell_size;
        let _ = writeln!(s, "ncols {}", self.cols);
        let _ = writeln!(s, "nrows {}", self.rows);
        let _ = writeln!(s, "xllcorner {}", self.origin[0] - cs / 2.0);
        let _ = writeln!(s, "yllcorner {}", self.origin[1] - cs / 2.0);
        let _ = writeln!(s, "cellsize {}", cs);
        let _ = writeln!(s, "NODATA_value {}", self.nodata);
        for r in (0..self.rows).rev() {
            let row: Vec<String> = (0..self.cols)
                .map(|c| {
                    let h = self.raw(c, r);
                    if h.is_nan() { self.nodata } else { h }.to_string()
                })
                .collect();
            s.push_str(&row.join(" "));
            s.push('\n');
        }
        s
    }

    pub fn load(path: &Path) -> Result<Self, GeoError> {
        Self::from_ascii_grid(&std::fs::read_to_string(path)?)
    }
}

/// Parameter interval where `x0 + t * d` stays within `[0, max]`.
fn slab(x0: f64, d: f64, max: f64) -> Option<(f64, f64)> {
    if d == 0.0 {
        return (x0 >= 0.0 && x0 <= max).then_some((f64::NEG_INFINITY, f64::INFINITY));
    }
    let a = (0.0 - x0) / d;
    let b = (max - x0) / d;
    Some((a.min(b), a.max(b)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn plane(f: impl Fn(f64, f64) -> f64) -> HeightField {
        HeightField::from_fn([-200.0, -200.0], 2.0, 201, 201, f).unwrap()
    }

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(1e-12)
    }

    #[test]
    fn flat_plane_hit() {
        let hf = plane(|_, _| 0.0);
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let hit = hf
            .raycast(&Ray {
                origin: [0.0, 0.0, 10.0],
                dir: [s, 0.0, -s],
            })
            .unwrap();
        let RayHit::Hit { point, depth } = hit else {
            panic!("expected a hit")
        };
        assert!((point[0] - 10.0).abs() < 1e-9 && point[1].abs() < 1e-12 && point[2].abs() < 1e-9);
        assert!(rel(depth, 10.0 * 2f64.sqrt()) < 1e-12);
    }

    #[test]
    fn upward_and_outgoing_rays_see_sky() {
        let hf = plane(|e, n| (e * 0.05).sin() * 3.0 + n * 0.01);
        let up = hf
            .raycast(&Ray {
                origin: [0.0, 0.0, 50.0],
                dir: [0.3, 0.2, 0.5],
            })
            .unwrap();
        assert_eq!(up, RayHit::Sky);
        let away = hf
            .raycast(&Ray {
                origin: [1000.0, 0.0, 50.0],
                dir: [1.0, 0.0, -0.01],
            })
            .unwrap();
        assert_eq!(away, RayHit::Sky);
    }

    #[test]
    fn slope_matches_closed_form() {
        let hf = plane(|e, _| 0.1 * e);
        let o = [-30.0, 12.0, 40.0];
        let d = super::super::normalize([0.8, -0.3, -0.4]);
        // 0.1 * (ox + t dx) = oz + t dz
        let t = (o[2] - 0.1 * o[0]) / (0.1 * d[0] - d[2]);
        let hit = hf.raycast(&Ray { origin: o, dir: d }).unwrap();
        assert!(rel(hit.depth().unwrap(), t) < 1e-6);
    }

    #[test]
    fn ray_entering_from_outside_grid() {
        let hf = plane(|_, _| 5.0);
        let o = [-300.0, 0.0, 25.0];
        let d = super::super::normalize([1.0, 0.0, -0.1]);
        let t = 20.0 / 0.1 * (1.0 + 0.01f64).sqrt();
        assert!(
            rel(
                hf.raycast(&Ray { origin: o, dir: d })
                    .unwrap()
                    .depth()
                    .unwrap(),
                t
            ) < 1e-9
        );
    }

    #[test]
    fn origin_below_terrain_is_an_error() {
        let hf = plane(|_, _| 5.0);
        let r = hf.raycast(&Ray {
            origin: [0.0, 0.0, 1.0],
            dir: [0.0, 0.0, -1.0],
        });
        assert!(matches!(r, Err(GeoError::OriginBelowTerrain { .. })));
    }

    #[test]
    fn vertical_ray_hits_bilinear_height() {
        let hf = plane(|e, n| 0.02 * e * n + 3.0);
        let hit = hf
            .raycast(&Ray {
                origin: [3.3, 7.1, 100.0],
                dir: [0.0, 0.0, -1.0],
            })
            .unwrap();
        let h = hf.height_at(3.3, 7.1).unwrap();
        assert!((hit.point().unwrap()[2] - h).abs() < 1e-9);
    }

    #[test]
    fn grazing_ray_over_a_bump_finds_first_crossing() {
        // ridge along north at e = 20
        let hf = plane(|e, _| if (e - 20.0).abs() < 1.0 { 30.0 } else { 0.0 });
        let hit = hf
            .raycast(&Ray {
                origin: [0.0, 0.0, 10.0],
                dir: [1.0, 0.0, 0.0],
            })
            .unwrap();
        let p = hit.point().unwrap();
        assert!(p[0] > 16.0 && p[0] < 20.0, "{p:?}");
    }

    #[test]
    fn nodata_cells_are_transparent() {
        let text = "ncols 3\nnrows 3\nxllcorner 0\nyllcorner 0\ncellsize 10\nNODATA_value -9999\n\
                    1 2 3\n4 -9999 6\n7 8 9\n";
        let hf = HeightField::from_ascii_grid(text).unwrap();
        assert_eq!(hf.sample(1, 1), None);
        assert_eq!(hf.height_at(6.0, 6.0), None);
        let hit = hf
            .raycast(&Ray {
                origin: [10.0, 10.0, 100.0],
                dir: [0.0, 0.0, -1.0],
            })
            .unwrap();
        assert_eq!(hit, RayHit::Sky);
    }

    #[test]
    fn ascii_grid_orientation_and_round_trip() {
        let text = "NCOLS 2\nNROWS 2\nXLLCORNER 100\nYLLCORNER 200\nCELLSIZE 2\n\
                    10 11\n20 21\n";
        let hf = HeightField::from_ascii_grid(text).unwrap();
        // first file row is the northern one
        assert_eq!(hf.origin, [101.0, 201.0]);
        assert_eq!(hf.sample(0, 0), Some(20.0));
        assert_eq!(hf.sample(1, 1), Some(11.0));
        let again = HeightField::from_ascii_grid(&hf.to_ascii_grid()).unwrap();
        assert_eq!(again, hf);
    }

    #[test]
    fn ascii_grid_rejects_bad_input() {
        assert!(HeightField::from_ascii_grid("ncols 2\nnrows 2\n1 2 3 4").is_err());
        assert!(HeightField::from_ascii_grid(
            "ncols 2\nnrows 2\nxllcorner 0\nyllcorner 0\ncellsize 1\n1 2 3"
        )
        .is_err());
        assert!(HeightField::from_ascii_grid(
            "ncols 2\nnrows 2\nxllcenter 0\nyllcenter 0\ncellsize 1\nbogus 3\n1 2 3 4"
        )
        .is_err());
    }
}

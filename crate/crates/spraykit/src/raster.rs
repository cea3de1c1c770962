//! Raster grids: grayscale images, instance-ID maps, segmentation maps.

/// Dense row-major grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid<T> {
    width: usize,
    height: usize,
    data: Vec<T>,
}

/// Grayscale intensity image, values in [0, 1].
pub type RasterImage = Grid<f32>;
/// Per-pixel ground-truth object ID; 0 is background.
pub type InstanceMap = Grid<u16>;
/// Per-pixel foreground probability in [0, 1] (binary maps use 0.0/1.0).
pub type SegmentationMap = Grid<f32>;

impl<T: Copy> Grid<T> {
    pub fn new(width: usize, height: usize, fill: T) -> Self {
        Self {
            width,
            height,
            data: vec![fill; width * height],
        }
    }

    pub fn from_vec(width: usize, height: usize, data: Vec<T>) -> Self {
        assert_eq!(data.len(), width * height);
        Self {
            width,
            height,
            data,
        }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> T {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: T) {
        self.data[y * self.width + x] = v;
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn map<U: Copy>(&self, f: impl Fn(T) -> U) -> Grid<U> {
        Grid {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Copy of the rectangle [x0, x1) x [y0, y1).
    pub fn crop(&self, x0: usize, y0: usize, x1: usize, y1: usize) -> Grid<T> {
        assert!(x1 <= self.width && y1 <= self.height && x0 < x1 && y0 < y1);
        let mut data = Vec::with_capacity((x1 - x0) * (y1 - y0));
        for y in y0..y1 {
            data.extend_from_slice(&self.data[y * self.width + x0..y * self.width + x1]);
        }
        Grid {
            width: x1 - x0,
            height: y1 - y0,
            data,
        }
    }

    /// Paste `src` with its top-left corner at (x0, y0).
    pub fn paste(&mut self, src: &Grid<T>, x0: usize, y0: usize) {
        assert!(x0 + src.width <= self.width && y0 + src.height <= self.height);
        for y in 0..src.height {
            let dst_row = (y0 + y) * self.width + x0;
            self.data[dst_row..dst_row + src.width]
                .copy_from_slice(&src.data[y * src.width..(y + 1) * src.width]);
        }
    }
}

/// Discrete Gaussian kernel of standard deviation `sigma` (radius 3*sigma),
/// normalized to sum 1. Returns a single-tap kernel for sigma <= 0.
pub fn gaussian_kernel(sigma: f64) -> Vec<f32> {
    if sigma <= 0.0 {
        return vec![1.0];
    }
    let radius = (3.0 * sigma).ceil() as i64;
    let mut k: Vec<f64> = (-radius..=radius)
        .map(|i| (-(i as f64).powi(2) / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= sum);
    k.iter().map(|&v| v as f32).collect()
}

/// Separable Gaussian blur with reflected borders. sigma <= 0 is a no-op copy.
pub fn gaussian_blur(grid: &Grid<f32>, sigma: f64) -> Grid<f32> {
    if sigma <= 0.0 {
        return grid.clone();
    }
    let kernel = gaussian_kernel(sigma);
    let radius = (kernel.len() / 2) as i64;
    let (w, h) = (grid.width as i64, grid.height as i64);
    let reflect = |i: i64, n: i64| -> usize {
        let mut i = i;
        if i < 0 {
            i = -i - 1;
        }
        if i >= n {
            i = 2 * n - 1 - i;
        }
        i.clamp(0, n - 1) as usize
    };
    // horizontal pass
    let mut tmp = Grid::new(grid.width, grid.height, 0.0f32);
    for y in 0..grid.height {
        for x in 0..w {
            let mut acc = 0.0f32;
            for (j, &kv) in kernel.iter().enumerate() {
                let sx = reflect(x + j as i64 - radius, w);
                acc += kv * grid.get(sx, y);
            }
            tmp.set(x as usize, y, acc);
        }
    }
    // vertical pass
    let mut out = Grid::new(grid.width, grid.height, 0.0f32);
    for y in 0..h {
        for x in 0..grid.width {
            let mut acc = 0.0f32;
            for (j, &kv) in kernel.iter().enumerate() {
                let sy = reflect(y + j as i64 - radius, h);
                acc += kv * tmp.get(x, sy);
            }
            out.set(x, y as usize, acc);
        }
    }
    out
}

/// Median pixel value (lower median for even counts). Returns 0 for empty.
pub fn median(grid: &Grid<f32>) -> f32 {
    if grid.data.is_empty() {
        return 0.0;
    }
    let mut v = grid.data.clone();
    let mid = v.len() / 2;
    v.select_nth_unstable_by(mid, |a, b| a.total_cmp(b));
    v[mid]
}

/// Bilinear sample with clamped borders.
pub fn sample_bilinear(grid: &Grid<f32>, x: f64, y: f64) -> f32 {
    let xf = x.clamp(0.0, (grid.width - 1) as f64);
    let yf = y.clamp(0.0, (grid.height - 1) as f64);
    let x0 = xf.floor() as usize;
    let y0 = yf.floor() as usize;
    let x1 = (x0 + 1).min(grid.width - 1);
    let y1 = (y0 + 1).min(grid.height - 1);
    let tx = (xf - x0 as f64) as f32;
    let ty = (yf - y0 as f64) as f32;
    let v00 = grid.get(x0, y0);
    let v10 = grid.get(x1, y0);
    let v01 = grid.get(x0, y1);
    let v11 = grid.get(x1, y1);
    (v00 * (1.0 - tx) + v10 * tx) * (1.0 - ty) + (v01 * (1.0 - tx) + v11 * tx) * ty
}

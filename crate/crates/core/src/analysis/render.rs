use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use image::{Rgb, RgbImage};
use serde::{Deserialize, Serialize};

use super::AnalysisError;
use crate::attention::{AttentionMatrix, Direction};
use crate::dataset::SetLabel;
use crate::Scalar;

/// Side length of one layer x head cell in pixels.
pub const CELL_PIXELS: u32 = 16;
/// Gap between panels of a composite figure.
const PANEL_GAP: u32 = 8;
const BACKGROUND: Rgb<u8> = Rgb([255, 255, 255]);
const MISSING: [Rgb<u8>; 2] = [Rgb([200, 200, 200]), Rgb([170, 170, 170])];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "mode")]
pub enum ColorScale {
    /// `[min(0, smallest value), largest value]` of the matrix itself.
    Auto,
    Fixed { min: f64, max: f64 },
}

impl ColorScale {
    fn bounds(self, values: impl Iterator<Item = f64>) -> (f64, f64) {
        match self {
            ColorScale::Fixed { min, max } => (min, max),
            ColorScale::Auto => {
                let (lo, hi) = values.fold((0f64, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
                (lo, if hi.is_finite() { hi } else { lo })
            }
        }
    }
}

/// Fixed `[0, max]` scale spanning every matrix of a panel group, so
/// panels are comparable.
pub fn shared_scale<'a, T: Scalar + 'a>(matrices: impl IntoIterator<Item = &'a AttentionMatrix<T>>) -> ColorScale {
    let max = matrices
        .into_iter()
        .flat_map(|m| m.values().iter().map(|v| v.to_f64_lossy()))
        .fold(0f64, f64::max);
    ColorScale::Fixed { min: 0.0, max }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Palette {
    /// White to dark blue; darker means higher.
    Sequential,
    /// Blue through white to red around the midpoint of the scale; darker
    /// means further from the midpoint.
    Diverging,
}

impl Palette {
    fn color(self, t: f64) -> Rgb<u8> {
        // an even number of steps keeps the midpoint exactly representable
        let level = (t.clamp(0.0, 1.0) * 254.0).round() / 254.0;
        let lerp = |a: [f64; 3], b: [f64; 3], s: f64| {
            Rgb([0, 1, 2].map(|i| (a[i] + (b[i] - a[i]) * s).round() as u8))
        };
        const WHITE: [f64; 3] = [255.0, 255.0, 255.0];
        const BLUE: [f64; 3] = [8.0, 48.0, 107.0];
        const RED: [f64; 3] = [103.0, 0.0, 13.0];
        match self {
            Palette::Sequential => lerp(WHITE, BLUE, level),
            Palette::Diverging if level < 0.5 => lerp(WHITE, BLUE, (0.5 - level) * 2.0),
            Palette::Diverging => lerp(WHITE, RED, (level - 0.5) * 2.0),
        }
    }
}

fn save_png(img: &RgbImage, path: &Path) -> Result<(), AnalysisError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|source| AnalysisError::Io {
            path: parent.to_path_buf(),
            source,
        })?;
    }
    img.save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| match e {
            image::ImageError::IoError(source) => AnalysisError::Io {
                path: path.to_path_buf(),
                source,
            },
            other => AnalysisError::Image {
                path: path.to_path_buf(),
                message: other.to_string(),
            },
        })
}

fn paint_grid(
    img: &mut RgbImage,
    x0: u32,
    y0: u32,
    values: &[Vec<Option<f64>>],
    (min, max): (f64, f64),
    palette: Palette,
) {
    let span = max - min;
    for (row, cells) in values.iter().enumerate() {
        for (col, v) in cells.iter().enumerate() {
            for dy in 0..CELL_PIXELS {
                for dx in 0..CELL_PIXELS {
                    let color = match v {
                        Some(v) => {
                            let t = if span > 0.0 { (v - min) / span } else { 0.0 };
                            palette.color(t)
                        }
                        None => MISSING[(((dx + dy) / 4) % 2) as usize],
                    };
                    img.put_pixel(x0 + col as u32 * CELL_PIXELS + dx, y0 + row as u32 * CELL_PIXELS + dy, color);
                }
            }
        }
    }
}

/// Writes a raster with one cell per value: rows top to bottom, columns
/// left to right. `None` cells are hatched grey.
pub fn render_grid(
    values: &[Vec<Option<f64>>],
    bounds: (f64, f64),
    palette: Palette,
    path: &Path,
) -> Result<(), AnalysisError> {
    let rows = values.len() as u32;
    let cols = values.iter().map(Vec::len).max().unwrap_or(0) as u32;
    let mut img = RgbImage::from_pixel(cols.max(1) * CELL_PIXELS, rows.max(1) * CELL_PIXELS, BACKGROUND);
    paint_grid(&mut img, 0, 0, values, bounds, palette);
    save_png(&img, path)
}

fn matrix_cells<T: Scalar>(matrix: &AttentionMatrix<T>) -> Result<Vec<Vec<Option<f64>>>, AnalysisError> {
    if matrix.values().iter().any(|v| !v.is_finite()) {
        return Err(AnalysisError::NonFinite);
    }
    Ok(matrix
        .rows()
        .into_iter()
        .map(|r| r.into_iter().map(|v| Some(v.to_f64_lossy())).collect())
        .collect())
}

/// What a heatmap shows and where it goes.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HeatmapSpec {
    pub title: String,
    pub dataset: Option<SetLabel>,
    pub pattern: Option<u8>,
    pub direction: Direction,
    pub output: PathBuf,
    pub scale: ColorScale,
}

impl HeatmapSpec {
    /// `figure.png` -> `figure.json`.
    pub fn sidecar_path(&self) -> PathBuf {
        self.output.with_extension("json")
    }
}

/// Machine-readable companion of a figure: enough to regenerate or compare
/// it without looking at pixels.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HeatmapSidecar {
    pub title: String,
    pub image: String,
    pub set: String,
    pub pattern: String,
    pub direction: Direction,
    pub layers: usize,
    pub heads: usize,
    pub axes: &'static str,
    pub palette: Palette,
    pub scale_min: f64,
    pub scale_max: f64,
    pub count: usize,
    /// Cell with the largest value as `[layer, head]`.
    pub argmax: [usize; 2],
    pub matrix: Vec<Vec<f64>>,
    pub metadata: BTreeMap<String, String>,
}

/// Renders an L x H matrix (y axis layers, x axis heads, darker is higher)
/// and writes its JSON sidecar next to the image.
pub fn render_heatmap<T: Scalar>(
    matrix: &AttentionMatrix<T>,
    spec: &HeatmapSpec,
    count: usize,
    metadata: &BTreeMap<String, String>,
) -> Result<HeatmapSidecar, AnalysisError> {
    let cells = matrix_cells(matrix)?;
    let bounds = spec.scale.bounds(cells.iter().flatten().flatten().copied());
    render_grid(&cells, bounds, Palette::Sequential, &spec.output)?;

    let values: Vec<f64> = matrix.values().iter().map(|v| v.to_f64_lossy()).collect();
    let best = (0..values.len()).fold(0, |b, i| if values[i] > values[b] { i } else { b });
    let heads = matrix.heads().max(1);
    let sidecar = HeatmapSidecar {
        title: spec.title.clone(),
        image: spec
            .output
            .file_name()
            .map_or(String::new(), |n| n.to_string_lossy().into_owned()),
        set: spec.dataset.map_or("all".into(), |d| d.to_string()),
        pattern: spec.pattern.map_or("all".into(), |p| p.to_string()),
        direction: spec.direction,
        layers: matrix.layers(),
        heads: matrix.heads(),
        axes: "rows=layers (top=first), columns=heads",
        palette: Palette::Sequential,
        scale_min: bounds.0,
        scale_max: bounds.1,
        count,
        argmax: [best / heads, best % heads],
        matrix: cells.into_iter().map(|r| r.into_iter().flatten().collect()).collect(),
        metadata: metadata.clone(),
    };
    write_json(&spec.sidecar_path(), &sidecar)?;
    Ok(sidecar)
}

pub(crate) fn write_json<S: Serialize>(path: &Path, value: &S) -> Result<(), AnalysisError> {
    let mut text = serde_json::to_string_pretty(value).expect("sidecar serializes");
    text.push('\n');
    fs::write(path, text).map_err(|source| AnalysisError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Tiles equally shaped matrices into one image, `columns` per row, with a
/// shared scale.
pub fn render_panel_grid<T: Scalar>(
    panels: &[&AttentionMatrix<T>],
    columns: usize,
    scale: ColorScale,
    path: &Path,
) -> Result<(), AnalysisError> {
    let cells: Vec<Vec<Vec<Option<f64>>>> = panels.iter().map(|m| matrix_cells(m)).collect::<Result<_, _>>()?;
    let bounds = scale.bounds(cells.iter().flatten().flatten().flatten().copied());
    let columns = columns.max(1);
    let grid_rows = panels.len().div_ceil(columns).max(1) as u32;
    let (ph, pw) = panels
        .first()
        .map_or((1, 1), |m| (m.layers() as u32 * CELL_PIXELS, m.heads() as u32 * CELL_PIXELS));
    let cols = columns.min(panels.len().max(1)) as u32;
    let width = cols * pw + (cols + 1) * PANEL_GAP;
    let height = grid_rows * ph + (grid_rows + 1) * PANEL_GAP;
    let mut img = RgbImage::from_pixel(width, height, BACKGROUND);
    for (i, c) in cells.iter().enumerate() {
        let (r, col) = ((i / columns) as u32, (i % columns) as u32);
        let x0 = PANEL_GAP + col * (pw + PANEL_GAP);
        let y0 = PANEL_GAP + r * (ph + PANEL_GAP);
        paint_grid(&mut img, x0, y0, c, bounds, Palette::Sequential);
    }
    save_png(&img, path)
}

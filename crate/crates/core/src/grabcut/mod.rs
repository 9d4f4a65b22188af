//! GrabCut foreground extraction: per-region color GMMs alternated with an
//! 8-connected graph min-cut, seeded by a bounding box and optional strokes.

mod gmm;
mod graph;
mod image;
mod segment;
mod trimap;

pub use self::image::{apply_mask, decode_image, decode_ppm, load_image, Mask, Rgb, RgbImage};
pub use gmm::{fit_gmm, learn_gmm, ColorGmm, GaussianComponent, COVARIANCE_EPSILON};
pub use graph::{cut_capacity, max_flow_min_cut, MinCut, PixelGraph};
pub use segment::{grabcut_segment, grabcut_segment_with, GrabcutParams, GrabcutSession, IterateSummary};
pub use trimap::{parse_strokes, Rect, Stroke, StrokeKind, Trimap, TrimapLabel};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GrabcutError {
    #[error("dimension mismatch: {0}")]
    Dimensions(String),
    #[error("cannot decode image: {0}")]
    Decode(String),
    #[error("i/o error: {0}")]
    Io(String),
    #[error("bounding box has zero area")]
    EmptyBbox,
    #[error("bounding box {bbox:?} exceeds the {width}x{height} image")]
    BboxOutOfBounds { bbox: Rect, width: usize, height: usize },
    #[error("bounding box leaves no background sample")]
    NoBackground,
    #[error("no foreground pixels remain")]
    NoForeground,
    #[error("stroke point ({x}, {y}) lies outside the {width}x{height} image")]
    StrokeOutOfBounds { x: i64, y: i64, width: usize, height: usize },
    #[error("strokes file line {line}: {reason}")]
    StrokeParse { line: usize, reason: String },
    #[error("need at least {needed} pixels to fit the color model, got {got}")]
    InsufficientSamples { needed: usize, got: usize },
    #[error("invalid parameter: {0}")]
    Params(String),
}

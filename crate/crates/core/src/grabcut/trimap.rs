use serde::{Deserialize, Serialize};

use super::GrabcutError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rect {
    pub x: usize,
    pub y: usize,
    pub w: usize,
    pub h: usize,
}

impl Rect {
    pub fn new(x: usize, y: usize, w: usize, h: usize) -> Self {
        Self { x, y, w, h }
    }

    pub fn contains(&self, x: usize, y: usize) -> bool {
        x >= self.x && x < self.x + self.w && y >= self.y && y < self.y + self.h
    }

    pub fn area(&self) -> usize {
        self.w * self.h
    }
}

impl std::str::FromStr for Rect {
    type Err = String;

    /// Parses `x,y,w,h`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<usize> = s
            .split(',')
            .map(|p| p.trim().parse::<usize>())
            .collect::<Result<_, _>>()
            .map_err(|e| format!("bbox '{s}': {e}"))?;
        match parts[..] {
            [x, y, w, h] => Ok(Rect { x, y, w, h }),
            _ => Err(format!("bbox '{s}' must have four comma-separated fields")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TrimapLabel {
    DefiniteBackground,
    ProbableBackground,
    ProbableForeground,
    DefiniteForeground,
}

impl TrimapLabel {
    pub fn is_foreground(self) -> bool {
        matches!(
            self,
            TrimapLabel::ProbableForeground | TrimapLabel::DefiniteForeground
        )
    }

    pub fn is_definite(self) -> bool {
        matches!(
            self,
            TrimapLabel::DefiniteBackground | TrimapLabel::DefiniteForeground
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StrokeKind {
    Fg,
    Bg,
}

/// A polyline of pixel coordinates painted with one label, 1 px wide.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Stroke {
    pub kind: StrokeKind,
    pub points: Vec<[i64; 2]>,
}

impl Stroke {
    /// Pixels covered by the polyline, segment by segment (Bresenham).
    /// A single point covers one pixel.
    pub fn rasterize(&self) -> Vec<(i64, i64)> {
        let mut out = Vec::new();
        match self.points.as_slice() {
            [] => {}
            [p] => out.push((p[0], p[1])),
            pts => {
                for seg in pts.windows(2) {
                    bresenham(seg[0], seg[1], &mut out);
                }
            }
        }
        out
    }
}

fn bresenham(a: [i64; 2], b: [i64; 2], out: &mut Vec<(i64, i64)>) {
    let (mut x, mut y) = (a[0], a[1]);
    let dx = (b[0] - x).abs();
    let dy = -(b[1] - y).abs();
    let sx = if x < b[0] { 1 } else { -1 };
    let sy = if y < b[1] { 1 } else { -1 };
    let mut err = dx + dy;
    loop {
        out.push((x, y));
        if x == b[0] && y == b[1] {
            break;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x += sx;
        }
        if e2 <= dx {
            err += dx;
            y += sy;
        }
    }
}

/// Parses lines of `fg|bg x0 y0 x1 y1`; blank lines and `#` comments are
/// skipped.
pub fn parse_strokes(text: &str) -> Result<Vec<Stroke>, GrabcutError> {
    let mut strokes = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |reason: String| GrabcutError::StrokeParse {
            line: i + 1,
            reason,
        };
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 5 {
            return Err(err(format!("expected 5 fields, found {}", fields.len())));
        }
        let kind = match fields[0] {
            "fg" => StrokeKind::Fg,
            "bg" => StrokeKind::Bg,
            other => return Err(err(format!("unknown stroke kind '{other}'"))),
        };
        let mut c = [0i64; 4];
        for (slot, f) in c.iter_mut().zip(&fields[1..]) {
            *slot = f.parse().map_err(|_| err(format!("bad coordinate '{f}'")))?;
        }
        strokes.push(Stroke {
            kind,
            points: vec![[c[0], c[1]], [c[2], c[3]]],
        });
    }
    Ok(strokes)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trimap {
    width: usize,
    height: usize,
    labels: Vec<TrimapLabel>,
}

impl Trimap {
    /// Outside the box is definite background, inside probable foreground.
    pub fn from_bbox(width: usize, height: usize, bbox: Rect) -> Result<Self, GrabcutError> {
        if bbox.w == 0 || bbox.h == 0 {
            return Err(GrabcutError::EmptyBbox);
        }
        if bbox.x + bbox.w > width || bbox.y + bbox.h > height {
            return Err(GrabcutError::BboxOutOfBounds {
                bbox,
                width,
                height,
            });
        }
        if bbox.area() == width * height {
            return Err(GrabcutError::NoBackground);
        }
        let labels = (0..height)
            .flat_map(|y| (0..width).map(move |x| (x, y)))
            .map(|(x, y)| {
                if bbox.contains(x, y) {
                    TrimapLabel::ProbableForeground
                } else {
                    TrimapLabel::DefiniteBackground
                }
            })
            .collect();
        Ok(Self {
            width,
            height,
            labels,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn labels(&self) -> &[TrimapLabel] {
        &self.labels
    }

    pub fn get(&self, x: usize, y: usize) -> TrimapLabel {
        self.labels[y * self.width + x]
    }

    /// Paints strokes as definite labels. All points are bounds-checked
    /// before anything is written, and the result must still hold both a
    /// foreground and a background pixel.
    pub fn apply_strokes(&mut self, strokes: &[Stroke]) -> Result<(), GrabcutError> {
        let (w, h) = (self.width as i64, self.height as i64);
        for s in strokes {
            if let Some(p) = s
                .points
                .iter()
                .find(|p| p[0] < 0 || p[1] < 0 || p[0] >= w || p[1] >= h)
            {
                return Err(GrabcutError::StrokeOutOfBounds {
                    x: p[0],
                    y: p[1],
                    width: self.width,
                    height: self.height,
                });
            }
        }
        let mut labels = self.labels.clone();
        for s in strokes {
            let label = match s.kind {
                StrokeKind::Fg => TrimapLabel::DefiniteForeground,
                StrokeKind::Bg => TrimapLabel::DefiniteBackground,
            };
            for (x, y) in s.rasterize() {
                labels[y as usize * self.width + x as usize] = label;
            }
        }
        if !labels.iter().any(|l| l.is_foreground()) {
            return Err(GrabcutError::NoForeground);
        }
        if labels.iter().all(|l| l.is_foreground()) {
            return Err(GrabcutError::NoBackground);
        }
        self.labels = labels;
        Ok(())
    }
}

//! Hand-written SVG 1.1 figures: cell heatmaps and mean/std learning curves.

use std::fmt::Write as _;

use fpg_core::{Error, Result};

const CELL: f64 = 24.0;
const MARGIN: f64 = 12.0;
const TITLE: f64 = 28.0;
const BAR: f64 = 16.0;

const VIRIDIS: [(f64, f64, f64); 5] = [
    (68.0, 1.0, 84.0),
    (59.0, 82.0, 139.0),
    (33.0, 145.0, 140.0),
    (94.0, 201.0, 98.0),
    (253.0, 231.0, 37.0),
];

const WALL: &str = "#202020";
const MISSING: &str = "#c8c8c8";
const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];

/// Viridis-like color for `t` in `[0, 1]`.
pub fn color(t: f64) -> String {
    let t = if t.is_finite() { t.clamp(0.0, 1.0) } else { 0.0 };
    let x = t * (VIRIDIS.len() - 1) as f64;
    let i = (x.floor() as usize).min(VIRIDIS.len() - 2);
    let w = x - i as f64;
    let (a, b) = (VIRIDIS[i], VIRIDIS[i + 1]);
    let mix = |p: f64, q: f64| (p + (q - p) * w).round() as u8;
    format!("#{:02x}{:02x}{:02x}", mix(a.0, b.0), mix(a.1, b.1), mix(a.2, b.2))
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// A labelled cell, such as the start or the goal.
#[derive(Debug, Clone, PartialEq)]
pub struct Marker {
    pub cell: (usize, usize),
    pub label: String,
}

/// Row-major field over a `width x height` grid; `None` marks cells without a value.
#[derive(Debug, Clone, PartialEq)]
pub struct Heatmap {
    pub title: String,
    pub width: usize,
    pub height: usize,
    pub values: Vec<Option<f64>>,
    pub walls: Vec<(usize, usize)>,
    pub markers: Vec<Marker>,
}

impl Heatmap {
    /// Smallest and largest finite value.
    pub fn range(&self) -> Option<(f64, f64)> {
        self.values
            .iter()
            .flatten()
            .filter(|v| v.is_finite())
            .fold(None, |acc, &v| match acc {
                None => Some((v, v)),
                Some((lo, hi)) => Some((lo.min(v), hi.max(v))),
            })
    }

    fn check(&self) -> Result<()> {
        if self.values.len() != self.width * self.height {
            return Err(Error::Shape(format!(
                "{} values for a {}x{} layout",
                self.values.len(),
                self.width,
                self.height
            )));
        }
        let inside = |&(x, y): &(usize, usize)| x < self.width && y < self.height;
        if !self.walls.iter().all(inside) || !self.markers.iter().map(|m| m.cell).all(|c| inside(&c)) {
            return Err(Error::Shape("wall or marker outside the layout".into()));
        }
        Ok(())
    }

    pub fn to_svg(&self) -> Result<String> {
        self.check()?;
        let (lo, hi) = self.range().unwrap_or((0.0, 0.0));
        let scale = |v: f64| if hi > lo { (v - lo) / (hi - lo) } else { 0.5 };
        let grid_w = self.width as f64 * CELL;
        let grid_h = self.height as f64 * CELL;
        let total_w = MARGIN * 3.0 + grid_w + BAR + 70.0;
        let total_h = TITLE + grid_h + MARGIN * 2.0;
        let mut s = String::new();
        let _ = writeln!(s, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{total_w:.0}" height="{total_h:.0}" data-min="{lo:e}" data-max="{hi:e}">"#
        );
        let _ = writeln!(s, "<title>{}</title>", escape(&self.title));
        let _ = writeln!(s, "<metadata>color scale min={lo:e} max={hi:e}</metadata>");
        let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
        let _ = writeln!(
            s,
            r#"<text x="{MARGIN}" y="{:.1}" font-family="sans-serif" font-size="14">{}</text>"#,
            TITLE - 10.0,
            escape(&self.title)
        );
        let (ox, oy) = (MARGIN, TITLE + MARGIN);
        for y in 0..self.height {
            for x in 0..self.width {
                let fill = match self.values[y * self.width + x] {
                    Some(v) if v.is_finite() => color(scale(v)),
                    _ => MISSING.to_string(),
                };
                let _ = writeln!(
                    s,
                    r#"<rect x="{:.1}" y="{:.1}" width="{CELL}" height="{CELL}" fill="{fill}"/>"#,
                    ox + x as f64 * CELL,
                    oy + y as f64 * CELL
                );
            }
        }
        for &(x, y) in &self.walls {
            let _ = writeln!(
                s,
                r#"<rect x="{:.1}" y="{:.1}" width="{CELL}" height="{CELL}" fill="{WALL}"/>"#,
                ox + x as f64 * CELL,
                oy + y as f64 * CELL
            );
        }
        for m in &self.markers {
            let (cx, cy) = (ox + (m.cell.0 as f64 + 0.5) * CELL, oy + (m.cell.1 as f64 + 0.5) * CELL);
            let _ = writeln!(
                s,
                r#"<circle cx="{cx:.1}" cy="{cy:.1}" r="{:.1}" fill="none" stroke="white" stroke-width="2"/>"#,
                CELL * 0.4
            );
            let _ = writeln!(
                s,
                r#"<text x="{cx:.1}" y="{:.1}" text-anchor="middle" font-family="sans-serif" font-size="11" fill="white">{}</text>"#,
                cy + 4.0,
                escape(&m.label)
            );
        }
        // color bar, top is the maximum
        let bx = ox + grid_w + MARGIN;
        let steps = 32;
        for k in 0..steps {
            let t = 1.0 - k as f64 / (steps - 1) as f64;
            let _ = writeln!(
                s,
                r#"<rect x="{bx:.1}" y="{:.2}" width="{BAR}" height="{:.2}" fill="{}"/>"#,
                oy + k as f64 * grid_h / steps as f64,
                grid_h / steps as f64 + 0.5,
                color(t)
            );
        }
        for (value, y) in [(hi, oy + 10.0), (lo, oy + grid_h)] {
            let _ = writeln!(
                s,
                r#"<text x="{:.1}" y="{y:.1}" font-family="sans-serif" font-size="10">{value:.3e}</text>"#,
                bx + BAR + 4.0
            );
        }
        s.push_str("</svg>\n");
        Ok(s)
    }

    /// The field as CSV rows (one per grid row); walls and missing cells are empty fields.
    pub fn to_csv(&self) -> Result<String> {
        self.check()?;
        let walls: std::collections::BTreeSet<_> = self.walls.iter().copied().collect();
        let mut s = String::new();
        for y in 0..self.height {
            let row: Vec<String> = (0..self.width)
                .map(|x| match self.values[y * self.width + x] {
                    Some(v) if v.is_finite() && !walls.contains(&(x, y)) => format!("{v:e}"),
                    _ => String::new(),
                })
                .collect();
            s.push_str(&row.join(","));
            s.push_str("\r\n");
        }
        Ok(s)
    }
}

/// One curve: `(x, mean, std)` points drawn as a line over a shaded band.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64, f64)>,
}

pub fn line_chart(title: &str, x_label: &str, y_label: &str, series: &[Series]) -> Result<String> {
    let all: Vec<&(f64, f64, f64)> = series
        .iter()
        .flat_map(|s| &s.points)
        .filter(|p| p.0.is_finite() && p.1.is_finite())
        .collect();
    if all.is_empty() {
        return Err(Error::Domain("nothing to plot: no finite points".into()));
    }
    let (w, h) = (640.0, 400.0);
    let (left, right, top, bottom) = (64.0, 150.0, 36.0, 48.0);
    let (pw, ph) = (w - left - right, h - top - bottom);
    let x_min = all.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let x_max = all.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
    let spread = |p: &&(f64, f64, f64)| if p.2.is_finite() { p.2 } else { 0.0 };
    let mut y_min = all.iter().map(|p| p.1 - spread(p)).fold(f64::INFINITY, f64::min);
    let mut y_max = all.iter().map(|p| p.1 + spread(p)).fold(f64::NEG_INFINITY, f64::max);
    if y_max <= y_min {
        y_min -= 0.5;
        y_max += 0.5;
    }
    let x_span = if x_max > x_min { x_max - x_min } else { 1.0 };
    let px = |x: f64| left + (x - x_min) / x_span * pw;
    let py = |y: f64| top + (1.0 - (y - y_min) / (y_max - y_min)) * ph;

    let mut s = String::new();
    let _ = writeln!(s, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{w}" height="{h}">"#
    );
    let _ = writeln!(s, "<title>{}</title>", escape(title));
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{left}" y="22" font-family="sans-serif" font-size="14">{}</text>"#,
        escape(title)
    );
    let _ = writeln!(
        s,
        r#"<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
    );
    for k in 0..=4 {
        let f = k as f64 / 4.0;
        let (xv, yv) = (x_min + f * x_span, y_min + f * (y_max - y_min));
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle" font-family="sans-serif" font-size="10">{}</text>"#,
            px(xv),
            top + ph + 14.0,
            tick(xv)
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end" font-family="sans-serif" font-size="10">{}</text>"#,
            left - 6.0,
            py(yv) + 3.0,
            tick(yv)
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle" font-family="sans-serif" font-size="12">{}</text>"#,
        left + pw / 2.0,
        h - 12.0,
        escape(x_label)
    );
    let _ = writeln!(
        s,
        r#"<text x="16" y="{:.1}" text-anchor="middle" font-family="sans-serif" font-size="12" transform="rotate(-90 16 {:.1})">{}</text>"#,
        top + ph / 2.0,
        top + ph / 2.0,
        escape(y_label)
    );
    for (i, series) in series.iter().enumerate() {
        let c = PALETTE[i % PALETTE.len()];
        let pts: Vec<_> = series
            .points
            .iter()
            .filter(|p| p.0.is_finite() && p.1.is_finite())
            .collect();
        if pts.is_empty() {
            continue;
        }
        let upper = pts.iter().map(|p| format!("{:.2},{:.2}", px(p.0), py(p.1 + spread(p))));
        let lower = pts
            .iter()
            .rev()
            .map(|p| format!("{:.2},{:.2}", px(p.0), py(p.1 - spread(p))));
        let band: Vec<String> = upper.chain(lower).collect();
        let _ = writeln!(
            s,
            r#"<polygon points="{}" fill="{c}" fill-opacity="0.2" stroke="none"/>"#,
            band.join(" ")
        );
        let line: Vec<String> = pts.iter().map(|p| format!("{:.2},{:.2}", px(p.0), py(p.1))).collect();
        let _ = writeln!(
            s,
            r#"<polyline points="{}" fill="none" stroke="{c}" stroke-width="1.5"/>"#,
            line.join(" ")
        );
        let ly = top + 14.0 + 16.0 * i as f64;
        let _ = writeln!(
            s,
            r#"<line x1="{:.1}" y1="{ly:.1}" x2="{:.1}" y2="{ly:.1}" stroke="{c}" stroke-width="2"/>"#,
            left + pw + 10.0,
            left + pw + 28.0
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" font-family="sans-serif" font-size="11">{}</text>"#,
            left + pw + 32.0,
            ly + 4.0,
            escape(&series.label)
        );
    }
    s.push_str("</svg>\n");
    Ok(s)
}

fn tick(v: f64) -> String {
    if v != 0.0 && (v.abs() >= 1e4 || v.abs() < 1e-2) {
        format!("{v:.1e}")
    } else {
        format!("{v:.2}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn field(values: Vec<Option<f64>>) -> Heatmap {
        Heatmap {
            title: "t".into(),
            width: 2,
            height: 2,
            values,
            walls: vec![(1, 1)],
            markers: vec![Marker {
                cell: (0, 0),
                label: "G".into(),
            }],
        }
    }

    #[test]
    fn uniform_field_has_one_color() {
        let svg = field(vec![Some(0.25); 4]).to_svg().unwrap();
        let mid = color(0.5);
        // every cell, the wall included before it is overdrawn
        assert_eq!(svg.matches(&format!(r#"fill="{mid}""#)).count(), 4);
        assert!(svg.contains("min=2.5e-1 max=2.5e-1"));
    }

    #[test]
    fn brightest_cell_gets_the_top_color() {
        let svg = field(vec![Some(1.0), Some(0.1), Some(0.0), Some(0.0)])
            .to_svg()
            .unwrap();
        let top = color(1.0);
        // one grid cell plus the top of the color bar
        assert_eq!(svg.matches(&format!(r#"fill="{top}""#)).count(), 2);
        assert!(svg.contains(r##"x="12.0" y="40.0" width="24" height="24" fill="#fde725""##));
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        assert!(matches!(field(vec![Some(1.0); 3]).to_svg(), Err(Error::Shape(_))));
    }

    #[test]
    fn csv_leaves_walls_empty() {
        let csv = field(vec![Some(1.0), None, Some(0.5), Some(2.0)]).to_csv().unwrap();
        assert_eq!(csv, "1e0,\r\n5e-1,\r\n");
    }

    #[test]
    fn empty_chart_is_rejected() {
        assert!(line_chart("t", "x", "y", &[]).is_err());
    }
}

//! SVG plots rendered from CSV files on disk, never from in-memory results.

use std::collections::BTreeMap;
use std::ops::Range;
use std::path::Path;

use plotters::coord::ranged1d::{AsRangedCoord, ValueFormatter};
use plotters::prelude::*;

use crate::error::{Error, Result};
use crate::table::Table;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Style {
    Lines,
    Points,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlotSpec {
    /// File stem; the plot is written to `plots/<name>.svg`.
    pub name: String,
    /// CSV file (relative to the artifact directory) holding the data.
    pub source: String,
    pub x: String,
    pub y: String,
    /// Column whose values split the rows into series.
    pub series: Option<String>,
    pub title: String,
    pub log_x: bool,
    pub log_y: bool,
    pub style: Style,
    /// Horizontal reference line.
    pub reference: Option<f64>,
}

impl PlotSpec {
    fn new(name: &str, source: &str, x: &str, y: &str, style: Style) -> Self {
        PlotSpec {
            name: name.into(),
            source: source.into(),
            x: x.into(),
            y: y.into(),
            series: None,
            title: format!("{y} vs {x}"),
            log_x: false,
            log_y: false,
            style,
            reference: None,
        }
    }

    pub fn lines(name: &str, source: &str, x: &str, y: &str) -> Self {
        Self::new(name, source, x, y, Style::Lines)
    }

    pub fn points(name: &str, source: &str, x: &str, y: &str) -> Self {
        Self::new(name, source, x, y, Style::Points)
    }

    pub fn titled(mut self, title: &str) -> Self {
        self.title = title.into();
        self
    }

    pub fn by(mut self, column: &str) -> Self {
        self.series = Some(column.into());
        self
    }

    pub fn log_x(mut self) -> Self {
        self.log_x = true;
        self
    }

    pub fn log_y(mut self) -> Self {
        self.log_y = true;
        self
    }

    pub fn reference(mut self, y: f64) -> Self {
        self.reference = Some(y);
        self
    }

    pub fn file_name(&self) -> String {
        format!("{}.svg", self.name)
    }
}

type Series = BTreeMap<String, Vec<(f64, f64)>>;

fn load_series(dir: &Path, spec: &PlotSpec) -> Result<Series> {
    let table = Table::read(&dir.join(&spec.source))?;
    let missing = |col: &str| Error::Plot { name: spec.name.clone(), reason: format!("no column `{col}` in {}", spec.source) };
    let xi = table.column(&spec.x).ok_or_else(|| missing(&spec.x))?;
    let yi = table.column(&spec.y).ok_or_else(|| missing(&spec.y))?;
    let si = match &spec.series {
        Some(s) => Some(table.column(s).ok_or_else(|| missing(s))?),
        None => None,
    };
    let mut series = Series::new();
    for row in &table.rows {
        let (Ok(x), Ok(y)) = (row[xi].parse::<f64>(), row[yi].parse::<f64>()) else { continue };
        if !x.is_finite() || !y.is_finite() || (spec.log_x && x <= 0.0) || (spec.log_y && y <= 0.0) {
            continue;
        }
        let key = si.map_or_else(|| spec.y.clone(), |i| row[i].clone());
        series.entry(key).or_default().push((x, y));
    }
    Ok(series)
}

fn span(values: impl Iterator<Item = f64>, log: bool, extra: Option<f64>) -> Range<f64> {
    let (mut lo, mut hi) = values.chain(extra).fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), v| (l.min(v), h.max(v)));
    if !lo.is_finite() {
        return if log { 1.0..10.0 } else { 0.0..1.0 };
    }
    if log {
        return lo / 1.2..hi * 1.2;
    }
    if hi - lo < 1e-12 {
        lo -= 0.5;
        hi += 0.5;
    }
    let pad = 0.05 * (hi - lo);
    lo - pad..hi + pad
}

/// Render `spec` from the CSVs in `dir` into `dir/plots/<name>.svg`.
pub fn render(dir: &Path, spec: &PlotSpec) -> Result<()> {
    let series = load_series(dir, spec)?;
    let xs = span(series.values().flatten().map(|p| p.0), spec.log_x, None);
    let ys = span(series.values().flatten().map(|p| p.1), spec.log_y, spec.reference);
    let plots = dir.join("plots");
    std::fs::create_dir_all(&plots)?;
    let path = plots.join(spec.file_name());
    let err = |e: &dyn std::fmt::Display| Error::Plot { name: spec.name.clone(), reason: e.to_string() };
    let root = SVGBackend::new(&path, (720, 480)).into_drawing_area();
    root.fill(&WHITE).map_err(|e| err(&e))?;
    match (spec.log_x, spec.log_y) {
        (false, false) => draw(&root, spec, &series, xs, ys),
        (true, false) => draw(&root, spec, &series, xs.log_scale(), ys),
        (false, true) => draw(&root, spec, &series, xs, ys.log_scale()),
        (true, true) => draw(&root, spec, &series, xs.log_scale(), ys.log_scale()),
    }
    .map_err(|e| err(&e))?;
    root.present().map_err(|e| err(&e))?;
    Ok(())
}

fn draw<X, Y>(
    root: &DrawingArea<SVGBackend<'_>, plotters::coord::Shift>,
    spec: &PlotSpec,
    series: &Series,
    xs: X,
    ys: Y,
) -> std::result::Result<(), DrawingAreaErrorKind<std::io::Error>>
where
    X: AsRangedCoord<Value = f64>,
    Y: AsRangedCoord<Value = f64>,
    X::CoordDescType: ValueFormatter<f64>,
    Y::CoordDescType: ValueFormatter<f64>,
{
    let (x_lo, x_hi) = {
        let all: Vec<f64> = series.values().flatten().map(|p| p.0).collect();
        (all.iter().copied().fold(f64::INFINITY, f64::min), all.iter().copied().fold(f64::NEG_INFINITY, f64::max))
    };
    let mut chart = ChartBuilder::on(root)
        .caption(&spec.title, ("sans-serif", 18))
        .margin(12)
        .x_label_area_size(36)
        .y_label_area_size(60)
        .build_cartesian_2d(xs, ys)?;
    chart.configure_mesh().x_desc(spec.x.as_str()).y_desc(spec.y.as_str()).draw()?;
    for (i, (label, points)) in series.iter().enumerate() {
        let color = Palette99::pick(i).to_rgba();
        let anno = match spec.style {
            Style::Lines => chart.draw_series(LineSeries::new(points.iter().copied(), color.stroke_width(2)))?,
            Style::Points => chart.draw_series(points.iter().map(|&p| Circle::new(p, 3, color.filled())))?,
        };
        anno.label(label.as_str()).legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 16, y)], color.stroke_width(2)));
    }
    if let (Some(r), true) = (spec.reference, x_lo.is_finite()) {
        chart.draw_series(LineSeries::new(vec![(x_lo, r), (x_hi, r)], BLACK.mix(0.5)))?;
    }
    if !series.is_empty() {
        chart.configure_series_labels().background_style(WHITE.mix(0.8)).border_style(BLACK).draw()?;
    }
    Ok(())
}

//! Gnuplot scripts that render the CSV outputs. The scripts are plain text
//! and depend only on their inputs, so identical runs produce identical
//! scripts.

use std::fmt::Write as _;

/// One CSV file plotted as one curve per panel.
#[derive(Clone, Debug, PartialEq)]
pub struct SeriesRef {
    pub label: String,
    pub file: String,
    /// Header line of the CSV, split at commas.
    pub columns: Vec<String>,
    pub rows: usize,
}

impl SeriesRef {
    /// Reads the header and counts the data rows of `csv`, skipping `#`
    /// comment lines as gnuplot does.
    pub fn from_csv(label: impl Into<String>, file: impl Into<String>, csv: &str) -> Self {
        let mut lines = csv.lines().filter(|l| !l.starts_with('#'));
        let columns = lines
            .next()
            .map(|h| h.split(',').map(str::to_string).collect())
            .unwrap_or_default();
        Self {
            label: label.into(),
            file: file.into(),
            columns,
            rows: lines.filter(|l| !l.trim().is_empty()).count(),
        }
    }

    fn index(&self, column: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == column).map(|i| i + 1)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Panel {
    pub title: String,
    pub x: String,
    pub y: String,
    pub log_x: bool,
    pub log_y: bool,
}

impl Panel {
    pub fn new(title: &str, x: &str, y: &str) -> Self {
        Self {
            title: title.into(),
            x: x.into(),
            y: y.into(),
            log_x: false,
            log_y: false,
        }
    }

    pub fn log_y(mut self) -> Self {
        self.log_y = true;
        self
    }

    pub fn log_log(mut self) -> Self {
        self.log_x = true;
        self.log_y = true;
        self
    }
}

/// Script drawing `panels` in a grid with one curve per series, writing
/// `image`.
pub fn emit_plot_script(title: &str, image: &str, series: &[SeriesRef], panels: &[Panel]) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "# {title}");
    let _ = writeln!(s, "# Render with: gnuplot <this file>");
    let empty: Vec<&SeriesRef> = series.iter().filter(|r| r.rows == 0).collect();
    for r in &empty {
        let _ = writeln!(s, "# warning: {} ({}) has no data rows and is not plotted", r.file, r.label);
    }
    let live: Vec<&SeriesRef> = series.iter().filter(|r| r.rows > 0).collect();
    if live.is_empty() || panels.is_empty() {
        let _ = writeln!(s, "# warning: empty data, nothing to plot");
        return s;
    }
    let cols = if panels.len() > 1 { 2 } else { 1 };
    let rows = panels.len().div_ceil(cols);
    let _ = writeln!(s, "set terminal pngcairo size {},{}", 600 * cols, 450 * rows);
    let _ = writeln!(s, "set output '{image}'");
    let _ = writeln!(s, "set datafile separator ','");
    let _ = writeln!(s, "set key autotitle columnheader");
    let _ = writeln!(s, "set grid");
    let _ = writeln!(s, "set multiplot layout {rows},{cols} title '{title}'");
    for p in panels {
        let _ = writeln!(s, "set title '{}'", p.title);
        let _ = writeln!(s, "set xlabel '{}'", p.x);
        let _ = writeln!(s, "set ylabel '{}'", p.y);
        let _ = writeln!(s, "{}set logscale x", if p.log_x { "" } else { "un" });
        let _ = writeln!(s, "{}set logscale y", if p.log_y { "" } else { "un" });
        let curves: Vec<String> = live
            .iter()
            .filter_map(|r| {
                let (x, y) = (r.index(&p.x)?, r.index(&p.y)?);
                Some(format!("'{}' using {x}:{y} with lines title '{}'", r.file, r.label))
            })
            .collect();
        if curves.is_empty() {
            let _ = writeln!(s, "# warning: no series has columns {} and {}", p.x, p.y);
            let _ = writeln!(s, "clear");
            continue;
        }
        let _ = writeln!(s, "plot {}", curves.join(", \\\n     "));
    }
    let _ = writeln!(s, "unset multiplot");
    s
}

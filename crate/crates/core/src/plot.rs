//! Minimal SVG charts: path overlays, paired histograms and line traces.

use std::fmt::Write as _;

use crate::eval::Histogram;
use crate::path_sim::PathDataset;

const W: f64 = 640.0;
const H: f64 = 400.0;
const MARGIN: f64 = 50.0;

struct Frame {
    x: (f64, f64),
    y: (f64, f64),
}

impl Frame {
    fn new(x: (f64, f64), y: (f64, f64)) -> Self {
        let widen = |(lo, hi): (f64, f64)| if hi > lo { (lo, hi) } else { (lo - 0.5, hi + 0.5) };
        Frame { x: widen(x), y: widen(y) }
    }

    fn px(&self, x: f64) -> f64 {
        MARGIN + (x - self.x.0) / (self.x.1 - self.x.0) * (W - 2.0 * MARGIN)
    }

    fn py(&self, y: f64) -> f64 {
        H - MARGIN - (y - self.y.0) / (self.y.1 - self.y.0) * (H - 2.0 * MARGIN)
    }

    fn open(&self, title: &str) -> String {
        let mut s = format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" font-family=\"sans-serif\" font-size=\"11\">\n\
             <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n\
             <text x=\"{}\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">{}</text>\n",
            W / 2.0,
            escape(title)
        );
        let (l, r, t, b) = (MARGIN, W - MARGIN, MARGIN, H - MARGIN);
        writeln!(s, "<path d=\"M{l},{t} L{l},{b} L{r},{b}\" stroke=\"black\" fill=\"none\"/>").unwrap();
        for (v, anchor_x, anchor_y) in [(self.x.0, l, b + 15.0), (self.x.1, r, b + 15.0)] {
            writeln!(s, "<text x=\"{anchor_x}\" y=\"{anchor_y}\" text-anchor=\"middle\">{}</text>", tick(v)).unwrap();
        }
        for (v, y) in [(self.y.0, b), (self.y.1, t)] {
            writeln!(s, "<text x=\"{}\" y=\"{}\" text-anchor=\"end\">{}</text>", l - 5.0, y + 4.0, tick(v)).unwrap();
        }
        s
    }
}

fn tick(v: f64) -> String {
    if v.abs() >= 1e4 || (v != 0.0 && v.abs() < 1e-2) {
        format!("{v:.2e}")
    } else {
        format!("{v:.2}")
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn legend(s: &mut String, entries: &[(&str, &str)]) {
    for (i, (name, color)) in entries.iter().enumerate() {
        let y = MARGIN + 5.0 + 15.0 * i as f64;
        writeln!(s, "<rect x=\"{}\" y=\"{}\" width=\"10\" height=\"10\" fill=\"{color}\"/>", W - MARGIN - 120.0, y - 9.0).unwrap();
        writeln!(s, "<text x=\"{}\" y=\"{y}\">{}</text>", W - MARGIN - 105.0, escape(name)).unwrap();
    }
}

fn polyline(s: &mut String, frame: &Frame, pts: impl Iterator<Item = (f64, f64)>, color: &str, opacity: f64) {
    let mut d = String::new();
    for (i, (x, y)) in pts.enumerate() {
        write!(d, "{}{:.2},{:.2} ", if i == 0 { "M" } else { "L" }, frame.px(x), frame.py(y)).unwrap();
    }
    writeln!(s, "<path d=\"{d}\" stroke=\"{color}\" stroke-opacity=\"{opacity}\" fill=\"none\" stroke-width=\"0.8\"/>").unwrap();
}

/// Overlay of the first `max_paths` paths (coordinate 0) of each dataset.
pub fn paths_svg(title: &str, sets: &[(&str, &PathDataset, &str)], max_paths: usize) -> String {
    let (mut x, mut y) = ((f64::INFINITY, f64::NEG_INFINITY), (f64::INFINITY, f64::NEG_INFINITY));
    for (_, ds, _) in sets {
        x = (x.0.min(0.0), x.1.max(ds.grid.horizon()));
        for p in 0..ds.n_paths.min(max_paths) {
            for k in 0..ds.grid.len() {
                let v = ds.value(p, k)[0];
                y = (y.0.min(v), y.1.max(v));
            }
        }
    }
    let frame = Frame::new(x, y);
    let mut s = frame.open(title);
    for (_, ds, color) in sets {
        for p in 0..ds.n_paths.min(max_paths) {
            polyline(&mut s, &frame, (0..ds.grid.len()).map(|k| (ds.grid.time(k), ds.value(p, k)[0])), color, 0.25);
        }
    }
    legend(&mut s, &sets.iter().map(|(n, _, c)| (*n, *c)).collect::<Vec<_>>());
    s.push_str("</svg>\n");
    s
}

/// Two histograms on shared bins, drawn as normalized densities.
pub fn histogram_svg(title: &str, hist: &Histogram, labels: (&str, &str)) -> String {
    let na = hist.counts_a.iter().sum::<usize>().max(1) as f64;
    let nb = hist.counts_b.iter().sum::<usize>().max(1) as f64;
    let width = |i: usize| hist.edges[i + 1] - hist.edges[i];
    let dens = |c: usize, n: f64, i: usize| c as f64 / n / width(i);
    let top = (0..hist.counts_a.len())
        .map(|i| dens(hist.counts_a[i], na, i).max(dens(hist.counts_b[i], nb, i)))
        .fold(0.0, f64::max);
    let frame = Frame::new((hist.edges[0], hist.edges[hist.edges.len() - 1]), (0.0, top));
    let mut s = frame.open(title);
    for (counts, n, color) in [(&hist.counts_a, na, "steelblue"), (&hist.counts_b, nb, "darkorange")] {
        for (i, &c) in counts.iter().enumerate() {
            let (x0, x1) = (frame.px(hist.edges[i]), frame.px(hist.edges[i + 1]));
            let y = frame.py(dens(c, n, i));
            writeln!(
                s,
                "<rect x=\"{x0:.2}\" y=\"{y:.2}\" width=\"{:.2}\" height=\"{:.2}\" fill=\"{color}\" fill-opacity=\"0.45\"/>",
                x1 - x0,
                frame.py(0.0) - y
            )
            .unwrap();
        }
    }
    legend(&mut s, &[(labels.0, "steelblue"), (labels.1, "darkorange")]);
    s.push_str("</svg>\n");
    s
}

/// Line chart of `(x, y)` series.
pub fn lines_svg(title: &str, series: &[(&str, Vec<(f64, f64)>, &str)]) -> String {
    let pts = series.iter().flat_map(|(_, p, _)| p.iter());
    let (mut x, mut y) = ((f64::INFINITY, f64::NEG_INFINITY), (f64::INFINITY, f64::NEG_INFINITY));
    for &(a, b) in pts {
        x = (x.0.min(a), x.1.max(a));
        y = (y.0.min(b), y.1.max(b));
    }
    let frame = Frame::new(x, y);
    let mut s = frame.open(title);
    for (_, p, color) in series {
        polyline(&mut s, &frame, p.iter().copied(), color, 1.0);
    }
    legend(&mut s, &series.iter().map(|(n, _, c)| (*n, *c)).collect::<Vec<_>>());
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::shared_histogram;

    #[test]
    fn documents_are_closed_svg() {
        let h = shared_histogram(&[0.0, 1.0, 2.0], &[1.0, 1.5]).unwrap();
        let s = histogram_svg("a < b", &h, ("x", "y"));
        assert!(s.starts_with("<svg") && s.trim_end().ends_with("</svg>"));
        assert!(s.contains("a &lt; b"));
        let s = lines_svg("t", &[("mu", vec![(0.0, 1.0), (1.0, 2.0)], "black")]);
        assert_eq!(s.matches("<path").count(), 2);
    }
}

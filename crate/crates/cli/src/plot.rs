//! SVG line plots of the experiment CSVs. The CSV kind is recognised from
//! its header; nothing is computed beyond grouping and quantiles.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use plotters::prelude::*;
use robust_w1::experiments::quantile;
use robust_w1::Error;

const SIZE: (u32, u32) = (800, 560);

struct Table {
    headers: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    fn read(path: &Path) -> Result<Self, Error> {
        let mut rdr = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .from_path(path)
            .map_err(|e| Error::Invalid(format!("cannot read {}: {e}", path.display())))?;
        let headers = rdr
            .headers()
            .map_err(|e| Error::Parse(e.to_string()))?
            .iter()
            .map(str::to_string)
            .collect();
        let mut rows = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
            rows.push(rec.iter().map(str::to_string).collect());
        }
        Ok(Table { headers, rows })
    }

    fn has(&self, cols: &[&str]) -> bool {
        cols.iter().all(|c| self.headers.iter().any(|h| h == c))
    }

    fn col(&self, name: &str) -> Result<usize, Error> {
        self.headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Parse(format!("missing column {name}")))
    }

    fn num(&self, row: &[String], col: usize) -> Result<f64, Error> {
        row[col].parse::<f64>().map_err(|_| Error::Parse(format!("not a number: {:?}", row[col])))
    }
}

/// One curve: label, `(x, mean, band_lo, band_hi)` points sorted by x.
type Curve = (String, Vec<(f64, f64, f64, f64)>);

/// Renders `input` into one or more SVG files in `out_dir`.
pub fn plot_csv(input: &Path, out_dir: &Path) -> Result<Vec<PathBuf>, Error> {
    let t = Table::read(input)?;
    if t.rows.is_empty() {
        return Err(Error::Invalid(format!("{} has no data rows", input.display())));
    }
    let stem = input.file_stem().and_then(|s| s.to_str()).unwrap_or("plot").to_string();
    if t.has(&["dataset", "tau", "k", "abs_error"]) {
        plot_sweep_rows(&t, &stem, out_dir)
    } else if t.has(&["dataset", "tau", "k", "mean", "q25", "q75"]) {
        plot_sweep_summary(&t, &stem, out_dir)
    } else if t.has(&["k", "epoch", "objective_mean"]) {
        let (k, e, o) = (t.col("k")?, t.col("epoch")?, t.col("objective_mean")?);
        let mut groups: BTreeMap<u64, Vec<(f64, f64, f64, f64)>> = BTreeMap::new();
        for r in &t.rows {
            let y = t.num(r, o)?;
            groups.entry(t.num(r, k)? as u64).or_default().push((t.num(r, e)?, y, y, y));
        }
        let curves = groups.into_iter().map(|(k, pts)| (format!("K = {k}"), pts)).collect();
        let path = out_dir.join(format!("{stem}.svg"));
        draw(&path, "Objective per epoch", "epoch", "objective", curves, false)?;
        Ok(vec![path])
    } else if t.has(&["n", "mean_error"]) || t.has(&["n", "error"]) {
        let n = t.col("n")?;
        let ecol = t.col(if t.has(&["mean_error"]) { "mean_error" } else { "error" })?;
        let mut groups: BTreeMap<u64, Vec<f64>> = BTreeMap::new();
        for r in &t.rows {
            groups.entry(t.num(r, n)? as u64).or_default().push(t.num(r, ecol)?);
        }
        let pts = band_points(groups.into_iter().map(|(n, v)| (n as f64, v)));
        let path = out_dir.join(format!("{stem}.svg"));
        draw(&path, "Error against sample size", "n", "mean error", vec![("mean error".into(), pts)], true)?;
        Ok(vec![path])
    } else {
        Err(Error::Parse(format!("{}: unrecognised CSV header {:?}", input.display(), t.headers)))
    }
}

fn band_points(groups: impl Iterator<Item = (f64, Vec<f64>)>) -> Vec<(f64, f64, f64, f64)> {
    groups
        .map(|(x, v)| {
            let mean = v.iter().sum::<f64>() / v.len() as f64;
            (x, mean, quantile(&v, 0.25), quantile(&v, 0.75))
        })
        .collect()
}

fn plot_sweep_rows(t: &Table, stem: &str, out_dir: &Path) -> Result<Vec<PathBuf>, Error> {
    let (dc, tc, kc, ec) = (t.col("dataset")?, t.col("tau")?, t.col("k")?, t.col("abs_error")?);
    let mut per: BTreeMap<String, BTreeMap<String, BTreeMap<u64, Vec<f64>>>> = BTreeMap::new();
    for r in &t.rows {
        per.entry(r[dc].clone())
            .or_default()
            .entry(r[tc].clone())
            .or_default()
            .entry(t.num(r, kc)? as u64)
            .or_default()
            .push(t.num(r, ec)?);
    }
    let mut written = Vec::new();
    for (dataset, taus) in per {
        let curves = taus
            .into_iter()
            .map(|(tau, ks)| (format!("tau = {tau}"), band_points(ks.into_iter().map(|(k, v)| (k as f64, v)))))
            .collect();
        let path = out_dir.join(format!("{stem}_{dataset}.svg"));
        draw(&path, &format!("Absolute error against K ({dataset})"), "K", "abs error", curves, false)?;
        written.push(path);
    }
    Ok(written)
}

fn plot_sweep_summary(t: &Table, stem: &str, out_dir: &Path) -> Result<Vec<PathBuf>, Error> {
    let (dc, tc, kc) = (t.col("dataset")?, t.col("tau")?, t.col("k")?);
    let (mc, lc, hc) = (t.col("mean")?, t.col("q25")?, t.col("q75")?);
    let mut per: BTreeMap<String, BTreeMap<String, Vec<(f64, f64, f64, f64)>>> = BTreeMap::new();
    for r in &t.rows {
        per.entry(r[dc].clone()).or_default().entry(r[tc].clone()).or_default().push((
            t.num(r, kc)?,
            t.num(r, mc)?,
            t.num(r, lc)?,
            t.num(r, hc)?,
        ));
    }
    let mut written = Vec::new();
    for (dataset, taus) in per {
        let curves = taus.into_iter().map(|(tau, pts)| (format!("tau = {tau}"), pts)).collect();
        let path = out_dir.join(format!("{stem}_{dataset}.svg"));
        draw(&path, &format!("Absolute error against K ({dataset})"), "K", "abs error", curves, false)?;
        written.push(path);
    }
    Ok(written)
}

fn draw_err<E: std::fmt::Debug>(e: E) -> Error {
    Error::Invalid(format!("plot rendering failed: {e:?}"))
}

fn draw(path: &Path, title: &str, xlabel: &str, ylabel: &str, mut curves: Vec<Curve>, log: bool) -> Result<(), Error> {
    for (_, pts) in curves.iter_mut() {
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    }
    let all = curves.iter().flat_map(|c| c.1.iter());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, m, lo, hi) in all {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(m.min(lo));
        y1 = y1.max(m.max(hi));
    }
    if !(x0.is_finite() && y0.is_finite()) {
        return Err(Error::Invalid("nothing to plot".into()));
    }
    if x1 <= x0 {
        x1 = x0 + 1.0;
    }
    if log {
        if y0 <= 0.0 || x0 <= 0.0 {
            return Err(Error::Invalid("log axes need positive values".into()));
        }
    } else {
        let pad = ((y1 - y0) * 0.05).max(1e-12);
        y0 -= pad;
        y1 += pad;
    }

    let root = SVGBackend::new(path, SIZE).into_drawing_area();
    root.fill(&WHITE).map_err(draw_err)?;
    let mut builder = ChartBuilder::on(&root);
    builder.caption(title, ("sans-serif", 22)).margin(16).x_label_area_size(40).y_label_area_size(70);

    macro_rules! render {
        ($chart:expr) => {{
            let mut chart = $chart;
            chart.configure_mesh().x_desc(xlabel).y_desc(ylabel).draw().map_err(draw_err)?;
            for (i, (label, pts)) in curves.iter().enumerate() {
                let color = Palette99::pick(i).to_rgba();
                let has_band = pts.iter().any(|p| p.2 != p.1 || p.3 != p.1);
                if has_band {
                    let mut poly: Vec<(f64, f64)> = pts.iter().map(|p| (p.0, p.3)).collect();
                    poly.extend(pts.iter().rev().map(|p| (p.0, p.2)));
                    chart.draw_series(std::iter::once(Polygon::new(poly, color.mix(0.2)))).map_err(draw_err)?;
                }
                chart
                    .draw_series(LineSeries::new(pts.iter().map(|p| (p.0, p.1)), color.stroke_width(2)))
                    .map_err(draw_err)?
                    .label(label.clone())
                    .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 20, y)], color.stroke_width(2)));
            }
            chart
                .configure_series_labels()
                .background_style(WHITE.mix(0.8))
                .border_style(BLACK)
                .draw()
                .map_err(draw_err)?;
        }};
    }
    if log {
        render!(builder.build_cartesian_2d((x0..x1).log_scale(), (y0..y1).log_scale()).map_err(draw_err)?);
    } else {
        render!(builder.build_cartesian_2d(x0..x1, y0..y1).map_err(draw_err)?);
    }
    root.present().map_err(draw_err)?;
    Ok(())
}

//! CSV report writers. Every file is written whole to a temporary sibling and
//! renamed into place.

use std::io::Write;
use std::path::Path;

use anyhow::{Context, Result};
use mfswarm::analysis::transition::SeriesPoint;
use mfswarm::analysis::{AblationReport, Heatmap, ReevalReport, TransitionRecord, UncertaintyReport, WindowMetrics};

const METRICS: [&str; 3] = WindowMetrics::NAMES;

pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir).with_context(|| format!("creating a file in {}", dir.display()))?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

struct Table {
    w: csv::Writer<Vec<u8>>,
}

impl Table {
    fn new<S: AsRef<str>>(header: &[S]) -> Result<Table> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(header.iter().map(|s| s.as_ref()))?;
        Ok(Table { w })
    }

    fn row<I: IntoIterator<Item = String>>(&mut self, cells: I) -> Result<()> {
        self.w.write_record(cells)?;
        Ok(())
    }

    fn save(self, path: &Path) -> Result<()> {
        let bytes = self.w.into_inner().map_err(|e| anyhow::anyhow!("csv: {}", e.error()))?;
        write_atomic(path, &bytes)
    }
}

fn s<T: ToString>(v: T) -> String {
    v.to_string()
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

/// `original_i..k, new_i..k, exploration, network, localization, retained`
pub fn reeval(report: &ReevalReport, path: &Path) -> Result<()> {
    let mut t = Table::new(&[
        "original_i", "original_j", "original_k", "new_i", "new_j", "new_k", "exploration", "network", "localization",
        "retained",
    ])?;
    for c in &report.cells {
        let [a, b, d] = c.original.0;
        let [x, y, z] = c.reevaluated.0;
        t.row([s(a), s(b), s(d), s(x), s(y), s(z), s(c.raw.exploration), s(c.raw.network), s(c.raw.localization), s(c.retained)])?;
    }
    t.save(path)
}

/// `ablation_runs.csv` (one row per mask and run) and `ablation_summary.csv`.
pub fn ablation(report: &AblationReport, dir: &Path) -> Result<()> {
    let mut runs = Table::new(&["mask", "run", "run_seed", "size"])?;
    let mut summary = Table::new(&["mask", "median_size", "u", "p_value", "p_corrected"])?;
    for m in &report.masks {
        for (r, (size, seed)) in m.sizes.iter().zip(&report.run_seeds).enumerate() {
            runs.row([s(m.mask), s(r), s(seed), s(size)])?;
        }
        summary.row([
            s(m.mask),
            s(m.median_size),
            opt(m.test.map(|t| t.u)),
            opt(m.test.map(|t| t.p_value)),
            opt(m.p_corrected),
        ])?;
    }
    runs.save(&dir.join("ablation_runs.csv"))?;
    summary.save(&dir.join("ablation_summary.csv"))
}

fn series_cells(p: &SeriesPoint) -> [String; 4] {
    [s(p.surrogate_exploration), s(p.unique_cells), s(p.network), s(p.localization)]
}

/// `transition_series.csv`, `transition_windows.csv`, `transition_summary.csv`.
pub fn transition(rec: &TransitionRecord, dir: &Path) -> Result<()> {
    let fields = ["surrogate_exploration", "unique_cells", "network", "localization"];
    let mut header = vec!["t".to_string()];
    for prefix in ["transition", "baseline"] {
        header.extend(fields.iter().map(|f| format!("{prefix}_{f}")));
    }
    let mut series = Table::new(&header)?;
    let n = rec.transition.len().max(rec.baseline.len());
    for i in 0..n {
        let t = rec.transition.get(i).or(rec.baseline.get(i)).map(|p| p.t).unwrap_or_default();
        let mut row = vec![s(t)];
        for part in [&rec.transition, &rec.baseline] {
            match part.get(i) {
                Some(p) => row.extend(series_cells(p)),
                None => row.extend(std::iter::repeat_n(String::new(), 4)),
            }
        }
        series.row(row)?;
    }
    series.save(&dir.join("transition_series.csv"))?;

    let mut windows = Table::new(&["repetition", "phase", METRICS[0], METRICS[1], METRICS[2]])?;
    for (phase, list) in
        [("pre_switch", &rec.pre_switch), ("final_transition", &rec.final_transition), ("final_baseline", &rec.final_baseline)]
    {
        for (r, w) in list.iter().enumerate() {
            windows.row([s(r), s(phase), s(w.exploration), s(w.network), s(w.localization)])?;
        }
    }
    windows.save(&dir.join("transition_windows.csv"))?;

    let mut summary = Table::new(&["metric", "transition_mean", "band_low", "band_high", "within_band"])?;
    let (mean, band, within) = (rec.transition_mean(), rec.baseline_band(), rec.within_band());
    for m in 0..3 {
        summary.row([s(METRICS[m]), s(mean[m]), s(band[m].0), s(band[m].1), s(within[m])])?;
    }
    summary.save(&dir.join("transition_summary.csv"))
}

/// `ellipse_samples.csv`, `ellipse_moments.csv`, `ellipse_slices.csv`.
pub fn ellipse(rep: &UncertaintyReport, dir: &Path) -> Result<()> {
    let mut samples = Table::new(&["repetition", METRICS[0], METRICS[1], METRICS[2]])?;
    for (r, x) in rep.samples.iter().enumerate() {
        samples.row([s(r), s(x[0]), s(x[1]), s(x[2])])?;
    }
    samples.save(&dir.join("ellipse_samples.csv"))?;

    let mut moments = Table::new(&["metric", "mean", "cov_exploration", "cov_network", "cov_localization"])?;
    for (m, c) in rep.covariance.iter().enumerate() {
        moments.row([s(METRICS[m]), s(rep.mean[m]), s(c[0]), s(c[1]), s(c[2])])?;
    }
    moments.save(&dir.join("ellipse_moments.csv"))?;

    let mut slices =
        Table::new(&["axis_x", "axis_y", "center_x", "center_y", "semi_major", "semi_minor", "angle"])?;
    for e in &rep.slices {
        slices.row([
            s(METRICS[e.axes.0]),
            s(METRICS[e.axes.1]),
            s(e.center.0),
            s(e.center.1),
            s(e.semi_major),
            s(e.semi_minor),
            s(e.angle),
        ])?;
    }
    slices.save(&dir.join("ellipse_slices.csv"))
}

/// Rows `count`, `w1..w8`, `t1..t8`; one column per slice, blank where the
/// slice is empty.
pub fn heatmap(h: &Heatmap, path: &Path) -> Result<()> {
    let mut header = vec!["row".to_string()];
    header.extend((0..h.slices.len()).map(|i| format!("s{i}")));
    let mut t = Table::new(&header)?;
    let mut counts = vec![s("count")];
    counts.extend(h.slices.iter().map(|sl| s(sl.as_ref().map_or(0, |x| x.count))));
    t.row(counts)?;
    for (row, label) in Heatmap::row_labels().into_iter().enumerate() {
        let mut cells = vec![label];
        cells.extend((0..h.slices.len()).map(|i| opt(h.value(row, i))));
        t.row(cells)?;
    }
    t.save(path)
}

//! Evaluation artifacts: scatter plot, confusion heatmap, and score
//! histogram, each emitted as a data file plus a rendered PNG.
//!
//! Images are drawn pixel by pixel with fixed colors and geometry, so
//! every artifact is a pure function of its input rows and can be
//! compared byte for byte across runs. The data files carry the same
//! numbers as the images; tests and downstream tooling read those
//! instead of decoding pixels.

use std::path::{Path, PathBuf};

use image::{Rgb, RgbImage};

use relkit::data::{score_histogram, HISTOGRAM_BINS};
use relkit::metrics::{confusion_matrix, PredictionSet, NUM_BINS};
use relkit::{Error, Result};

const WHITE: Rgb<u8> = Rgb([255, 255, 255]);
const BLACK: Rgb<u8> = Rgb([0, 0, 0]);
const GRID: Rgb<u8> = Rgb([225, 225, 225]);
const DIAGONAL: Rgb<u8> = Rgb([186, 186, 186]);
const POINT: Rgb<u8> = Rgb([31, 119, 180]);
const LABEL_BAR: Rgb<u8> = Rgb([31, 119, 180]);
const PREDICTION_BAR: Rgb<u8> = Rgb([255, 127, 14]);
const HEAT: Rgb<u8> = Rgb([178, 24, 43]);

/// One line of a predictions CSV. An absent label means the source
/// dataset was unlabeled; reports require labels, prediction-only files
/// do not.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionRow {
    pub pair_id: String,
    pub label: Option<f64>,
    pub prediction: f64,
}

const PREDICTIONS_HEADER: [&str; 3] = ["pair_id", "label", "prediction"];

/// Writes rows as `pair_id,label,prediction`; a missing label becomes an
/// empty field.
pub fn write_predictions_csv(rows: &[PredictionRow], path: &Path) -> Result<()> {
    let mut out = csv::WriterBuilder::new()
        .quote_style(csv::QuoteStyle::Necessary)
        .from_path(path)
        .map_err(|e| Error::Report(format!("cannot write {}: {e}", path.display())))?;
    out.write_record(PREDICTIONS_HEADER)
        .map_err(|e| Error::Report(format!("cannot write predictions: {e}")))?;
    for row in rows {
        let label = row.label.map(|l| l.to_string()).unwrap_or_default();
        out.write_record([
            row.pair_id.as_str(),
            label.as_str(),
            &row.prediction.to_string(),
        ])
        .map_err(|e| Error::Report(format!("cannot write predictions: {e}")))?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_predictions_csv(path: &Path) -> Result<Vec<PredictionRow>> {
    let mut reader = csv::ReaderBuilder::new()
        .from_path(path)
        .map_err(|e| Error::Report(format!("cannot read {}: {e}", path.display())))?;
    let header = reader
        .headers()
        .map_err(|e| Error::Report(format!("cannot read header: {e}")))?;
    if header != PREDICTIONS_HEADER.as_slice() {
        return Err(Error::Report(format!(
            "expected columns pair_id,label,prediction, got {}",
            header.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut rows = Vec::new();
    for (index, record) in reader.records().enumerate() {
        let line = (index + 2) as u64;
        let record = record.map_err(|e| Error::Parse {
            line,
            message: e.to_string(),
        })?;
        let field = |i: usize| record.get(i).unwrap_or("");
        let parse = |raw: &str, what: &str| -> Result<f64> {
            raw.parse().map_err(|_| Error::Parse {
                line,
                message: format!("{what} {raw:?} is not a decimal number"),
            })
        };
        let label = match field(1) {
            "" => None,
            raw => Some(parse(raw, "label")?),
        };
        rows.push(PredictionRow {
            pair_id: field(0).to_string(),
            label,
            prediction: parse(field(2), "prediction")?,
        });
    }
    Ok(rows)
}

/// Renders all report artifacts into `out_dir`, returning the written
/// paths. Every row must be labeled.
pub fn emit_report(rows: &[PredictionRow], out_dir: &Path) -> Result<Vec<PathBuf>> {
    if rows.is_empty() {
        return Err(Error::Report("no prediction rows to report on".into()));
    }
    let mut labels = Vec::with_capacity(rows.len());
    for row in rows {
        match row.label {
            Some(label) => labels.push(label),
            None => {
                return Err(Error::Report(format!(
                    "pair {} has no label; reports require labeled predictions",
                    row.pair_id
                )))
            }
        }
    }
    // Out-of-range predictions are clamped exactly as evaluation clamps
    // them, so the plots agree with the metric report.
    let predictions: Vec<f64> = rows.iter().map(|r| r.prediction.clamp(0.0, 1.0)).collect();

    let scatter_csv = out_dir.join("scatter.csv");
    write_scatter_csv(&labels, &predictions, &scatter_csv)?;
    let scatter_png = out_dir.join("scatter.png");
    save_png(&scatter_image(&labels, &predictions), &scatter_png)?;

    let confusion = confusion_matrix(&PredictionSet::new(labels.clone(), predictions.clone())?)?;
    let confusion_txt = out_dir.join("confusion.txt");
    std::fs::write(&confusion_txt, confusion_text(&confusion))?;
    let confusion_png = out_dir.join("confusion.png");
    save_png(&confusion_image(&confusion), &confusion_png)?;

    let label_hist = score_histogram(&labels);
    let prediction_hist = score_histogram(&predictions);
    let histogram_csv = out_dir.join("histogram.csv");
    write_histogram_csv(&label_hist, &prediction_hist, &histogram_csv)?;
    let histogram_png = out_dir.join("histogram.png");
    save_png(&histogram_image(&label_hist, &prediction_hist), &histogram_png)?;

    Ok(vec![
        scatter_csv,
        scatter_png,
        confusion_txt,
        confusion_png,
        histogram_csv,
        histogram_png,
    ])
}

fn save_png(image: &RgbImage, path: &Path) -> Result<()> {
    image
        .save(path)
        .map_err(|e| Error::Report(format!("cannot write {}: {e}", path.display())))
}

fn write_scatter_csv(labels: &[f64], predictions: &[f64], path: &Path) -> Result<()> {
    let mut out = String::from("label,prediction\n");
    for (label, prediction) in labels.iter().zip(predictions) {
        out.push_str(&format!("{label},{prediction}\n"));
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Fixed-width text grid of the confusion matrix.
pub fn confusion_text(confusion: &[[u64; NUM_BINS]; NUM_BINS]) -> String {
    let mut out = String::new();
    out.push_str("confusion matrix: rows = true bin, columns = predicted bin\n");
    out.push_str("bins: [0.0,0.2) [0.2,0.4) [0.4,0.6) [0.6,0.8) [0.8,1.0]\n");
    out.push_str("      ");
    for col in 0..NUM_BINS {
        out.push_str(&format!("{:>8}", format!("pred{col}")));
    }
    out.push('\n');
    for (row, counts) in confusion.iter().enumerate() {
        out.push_str(&format!("{:<6}", format!("true{row}")));
        for count in counts {
            out.push_str(&format!("{count:>8}"));
        }
        out.push('\n');
    }
    out
}

fn write_histogram_csv(
    label_hist: &[u64; HISTOGRAM_BINS],
    prediction_hist: &[u64; HISTOGRAM_BINS],
    path: &Path,
) -> Result<()> {
    let mut out = String::from("bin_lo,bin_hi,label_count,prediction_count\n");
    for bin in 0..HISTOGRAM_BINS {
        // Edges as decimal literals, not computed floats, so the file
        // shows exact bin boundaries.
        let lo = if bin == 0 {
            "0.0".to_string()
        } else {
            format!("0.{bin}")
        };
        let hi = if bin == HISTOGRAM_BINS - 1 {
            "1.0".to_string()
        } else {
            format!("0.{}", bin + 1)
        };
        out.push_str(&format!(
            "{lo},{hi},{},{}\n",
            label_hist[bin], prediction_hist[bin]
        ));
    }
    std::fs::write(path, out)?;
    Ok(())
}

fn fill_rect(image: &mut RgbImage, x0: u32, y0: u32, width: u32, height: u32, color: Rgb<u8>) {
    for y in y0..(y0 + height).min(image.height()) {
        for x in x0..(x0 + width).min(image.width()) {
            image.put_pixel(x, y, color);
        }
    }
}

const SCATTER_MARGIN: u32 = 20;
const SCATTER_PLOT: u32 = 400;

/// Square scatter plot of predictions (y) against labels (x), both on
/// [0,1], with 0.2-step gridlines and the identity diagonal.
pub fn scatter_image(labels: &[f64], predictions: &[f64]) -> RgbImage {
    let size = 2 * SCATTER_MARGIN + SCATTER_PLOT;
    let mut image = RgbImage::from_pixel(size, size, WHITE);
    let scale = |v: f64| (v.clamp(0.0, 1.0) * f64::from(SCATTER_PLOT - 1)).round() as u32;
    let to_x = |v: f64| SCATTER_MARGIN + scale(v);
    let to_y = |v: f64| SCATTER_MARGIN + (SCATTER_PLOT - 1) - scale(v);

    for step in [0.2, 0.4, 0.6, 0.8] {
        fill_rect(&mut image, to_x(step), SCATTER_MARGIN, 1, SCATTER_PLOT, GRID);
        fill_rect(&mut image, SCATTER_MARGIN, to_y(step), SCATTER_PLOT, 1, GRID);
    }
    for t in 0..SCATTER_PLOT {
        let x = SCATTER_MARGIN + t;
        let y = SCATTER_MARGIN + (SCATTER_PLOT - 1) - t;
        image.put_pixel(x, y, DIAGONAL);
    }
    // Plot border.
    fill_rect(&mut image, SCATTER_MARGIN, SCATTER_MARGIN, SCATTER_PLOT, 1, BLACK);
    fill_rect(&mut image, SCATTER_MARGIN, SCATTER_MARGIN + SCATTER_PLOT - 1, SCATTER_PLOT, 1, BLACK);
    fill_rect(&mut image, SCATTER_MARGIN, SCATTER_MARGIN, 1, SCATTER_PLOT, BLACK);
    fill_rect(&mut image, SCATTER_MARGIN + SCATTER_PLOT - 1, SCATTER_MARGIN, 1, SCATTER_PLOT, BLACK);

    for (label, prediction) in labels.iter().zip(predictions) {
        let cx = to_x(*label);
        let cy = to_y(*prediction);
        fill_rect(&mut image, cx.saturating_sub(1), cy.saturating_sub(1), 3, 3, POINT);
    }
    image
}

const HEAT_CELL: u32 = 64;
const HEAT_GAP: u32 = 2;

/// Heatmap of the confusion matrix; cell darkness is the count relative
/// to the largest cell. True bin 0 is the top row, predicted bin 0 the
/// left column.
pub fn confusion_image(confusion: &[[u64; NUM_BINS]; NUM_BINS]) -> RgbImage {
    let bins = NUM_BINS as u32;
    let size = bins * HEAT_CELL + (bins + 1) * HEAT_GAP;
    let mut image = RgbImage::from_pixel(size, size, WHITE);
    let max = confusion.iter().flatten().copied().max().unwrap_or(0);
    for (row, counts) in confusion.iter().enumerate() {
        for (col, &count) in counts.iter().enumerate() {
            let intensity = if max == 0 { 0.0 } else { count as f64 / max as f64 };
            let channel = |w: u8, h: u8| {
                (f64::from(w) + (f64::from(h) - f64::from(w)) * intensity).round() as u8
            };
            let color = Rgb([
                channel(WHITE[0], HEAT[0]),
                channel(WHITE[1], HEAT[1]),
                channel(WHITE[2], HEAT[2]),
            ]);
            let x0 = HEAT_GAP + col as u32 * (HEAT_CELL + HEAT_GAP);
            let y0 = HEAT_GAP + row as u32 * (HEAT_CELL + HEAT_GAP);
            fill_rect(&mut image, x0, y0, HEAT_CELL, HEAT_CELL, color);
        }
    }
    image
}

const HIST_MARGIN: u32 = 20;
const HIST_PLOT_HEIGHT: u32 = 200;
const HIST_BAR: u32 = 16;
const HIST_INNER_GAP: u32 = 2;
const HIST_STRIDE: u32 = 46;

/// Grouped bar chart: per score bin, a label-count bar beside a
/// prediction-count bar, scaled to the tallest bar.
pub fn histogram_image(
    label_hist: &[u64; HISTOGRAM_BINS],
    prediction_hist: &[u64; HISTOGRAM_BINS],
) -> RgbImage {
    let width = 2 * HIST_MARGIN + HISTOGRAM_BINS as u32 * HIST_STRIDE;
    let height = 2 * HIST_MARGIN + HIST_PLOT_HEIGHT;
    let mut image = RgbImage::from_pixel(width, height, WHITE);
    let max = label_hist
        .iter()
        .chain(prediction_hist)
        .copied()
        .max()
        .unwrap_or(0);
    let baseline = HIST_MARGIN + HIST_PLOT_HEIGHT;
    for bin in 0..HISTOGRAM_BINS {
        let x0 = HIST_MARGIN + bin as u32 * HIST_STRIDE;
        for (offset, count, color) in [
            (0, label_hist[bin], LABEL_BAR),
            (HIST_BAR + HIST_INNER_GAP, prediction_hist[bin], PREDICTION_BAR),
        ] {
            if max == 0 {
                continue;
            }
            let bar = ((count as f64 / max as f64) * f64::from(HIST_PLOT_HEIGHT)).round() as u32;
            fill_rect(&mut image, x0 + offset, baseline - bar, HIST_BAR, bar, color);
        }
    }
    fill_rect(&mut image, HIST_MARGIN, baseline, HISTOGRAM_BINS as u32 * HIST_STRIDE - (HIST_STRIDE - 2 * HIST_BAR - HIST_INNER_GAP), 1, BLACK);
    image
}

#[cfg(test)]
mod tests {
    use super::*;
    use relkit::data::{compute_stats, LabeledPair, PairDataset, SplitName};

    fn rows(pairs: &[(f64, f64)]) -> Vec<PredictionRow> {
        pairs
            .iter()
            .enumerate()
            .map(|(i, (label, prediction))| PredictionRow {
                pair_id: format!("p{i}"),
                label: Some(*label),
                prediction: *prediction,
            })
            .collect()
    }

    #[test]
    fn predictions_csv_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("predictions.csv");
        let mut original = rows(&[(0.0, 0.31), (0.85, 0.9)]);
        original.push(PredictionRow {
            pair_id: "unlabeled".into(),
            label: None,
            prediction: 0.5,
        });
        write_predictions_csv(&original, &path).unwrap();
        let reloaded = read_predictions_csv(&path).unwrap();
        assert_eq!(reloaded, original);
    }

    #[test]
    fn wrong_columns_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("predictions.csv");
        std::fs::write(&path, "pair_id,gold,prediction\na,0.5,0.5\n").unwrap();
        let err = read_predictions_csv(&path).unwrap_err();
        assert!(matches!(err, Error::Report(_)));
    }

    #[test]
    fn emit_writes_all_six_artifacts() {
        let dir = tempfile::tempdir().unwrap();
        let written = emit_report(&rows(&[(0.1, 0.2), (0.5, 0.4), (0.9, 0.95)]), dir.path())
            .unwrap();
        assert_eq!(written.len(), 6);
        for path in &written {
            assert!(path.exists(), "{} missing", path.display());
            assert!(std::fs::metadata(path).unwrap().len() > 0);
        }
    }

    #[test]
    fn unlabeled_rows_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let bad = vec![PredictionRow {
            pair_id: "p0".into(),
            label: None,
            prediction: 0.5,
        }];
        assert!(matches!(
            emit_report(&bad, dir.path()).unwrap_err(),
            Error::Report(_)
        ));
    }

    #[test]
    fn artifacts_are_deterministic() {
        let dir_a = tempfile::tempdir().unwrap();
        let dir_b = tempfile::tempdir().unwrap();
        let input = rows(&[(0.12, 0.3), (0.4, 0.44), (0.77, 0.61), (1.0, 0.98)]);
        let a = emit_report(&input, dir_a.path()).unwrap();
        let b = emit_report(&input, dir_b.path()).unwrap();
        for (pa, pb) in a.iter().zip(&b) {
            assert_eq!(
                std::fs::read(pa).unwrap(),
                std::fs::read(pb).unwrap(),
                "{} differs between runs",
                pa.display()
            );
        }
    }

    #[test]
    fn perfect_predictions_color_only_the_heatmap_diagonal() {
        let input: Vec<(f64, f64)> = vec![(0.1, 0.1), (0.3, 0.3), (0.5, 0.5), (0.7, 0.7), (0.9, 0.9)];
        let labels: Vec<f64> = input.iter().map(|(l, _)| *l).collect();
        let predictions: Vec<f64> = input.iter().map(|(_, p)| *p).collect();
        let confusion =
            confusion_matrix(&PredictionSet::new(labels, predictions).unwrap()).unwrap();
        let image = confusion_image(&confusion);
        for row in 0..NUM_BINS as u32 {
            for col in 0..NUM_BINS as u32 {
                let x = HEAT_GAP + col * (HEAT_CELL + HEAT_GAP) + HEAT_CELL / 2;
                let y = HEAT_GAP + row * (HEAT_CELL + HEAT_GAP) + HEAT_CELL / 2;
                let pixel = *image.get_pixel(x, y);
                if row == col {
                    assert_eq!(pixel, HEAT);
                } else {
                    assert_eq!(pixel, WHITE);
                }
            }
        }
    }

    #[test]
    fn constant_predictions_fill_a_single_heatmap_column() {
        let labels = vec![0.05, 0.25, 0.45, 0.65, 0.85];
        let predictions = vec![0.5; 5];
        let confusion =
            confusion_matrix(&PredictionSet::new(labels, predictions).unwrap()).unwrap();
        let image = confusion_image(&confusion);
        for row in 0..NUM_BINS as u32 {
            for col in 0..NUM_BINS as u32 {
                let x = HEAT_GAP + col * (HEAT_CELL + HEAT_GAP) + HEAT_CELL / 2;
                let y = HEAT_GAP + row * (HEAT_CELL + HEAT_GAP) + HEAT_CELL / 2;
                let colored = *image.get_pixel(x, y) != WHITE;
                assert_eq!(colored, col == 2, "row {row} col {col}");
            }
        }
    }

    #[test]
    fn perfect_predictions_put_scatter_points_on_the_diagonal() {
        let labels: Vec<f64> = (0..=10).map(|i| f64::from(i) / 10.0).collect();
        let image = scatter_image(&labels, &labels);
        let scale = |v: f64| (v * f64::from(SCATTER_PLOT - 1)).round() as u32;
        for label in &labels {
            let x = SCATTER_MARGIN + scale(*label);
            let y = SCATTER_MARGIN + (SCATTER_PLOT - 1) - scale(*label);
            assert_eq!(*image.get_pixel(x, y), POINT);
        }
    }

    #[test]
    fn histogram_csv_matches_dataset_statistics() {
        let dir = tempfile::tempdir().unwrap();
        let scores = [0.0, 0.05, 0.1, 0.35, 0.35, 0.62, 0.99, 1.0];
        let input: Vec<PredictionRow> = scores
            .iter()
            .enumerate()
            .map(|(i, s)| PredictionRow {
                pair_id: format!("p{i}"),
                label: Some(*s),
                prediction: 0.5,
            })
            .collect();
        emit_report(&input, dir.path()).unwrap();

        let pairs: Vec<LabeledPair> = scores
            .iter()
            .enumerate()
            .map(|(i, s)| LabeledPair {
                pair_id: format!("p{i}"),
                sentence_1: "left text".into(),
                sentence_2: "right text".into(),
                score: Some(*s),
            })
            .collect();
        let ds = PairDataset::new("eng", SplitName::Unsplit, pairs).unwrap();
        let stats = compute_stats(&ds).unwrap();

        let text = std::fs::read_to_string(dir.path().join("histogram.csv")).unwrap();
        let label_counts: Vec<u64> = text
            .lines()
            .skip(1)
            .map(|line| line.split(',').nth(2).unwrap().parse().unwrap())
            .collect();
        assert_eq!(label_counts, stats.histogram.to_vec());
        let prediction_counts: Vec<u64> = text
            .lines()
            .skip(1)
            .map(|line| line.split(',').nth(3).unwrap().parse().unwrap())
            .collect();
        assert_eq!(prediction_counts.iter().sum::<u64>(), scores.len() as u64);
    }

    #[test]
    fn confusion_text_grid_lists_all_counts() {
        let mut confusion = [[0u64; NUM_BINS]; NUM_BINS];
        confusion[0][0] = 3;
        confusion[4][1] = 7;
        let text = confusion_text(&confusion);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 2 + 1 + NUM_BINS);
        assert!(lines[3].starts_with("true0"));
        assert!(lines[3].contains('3'));
        assert!(lines[7].contains('7'));
    }
}

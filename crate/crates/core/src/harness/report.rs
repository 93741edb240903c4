//! Metric tables: one row per method, CSV for machines and an aligned
//! text table for humans, plus per-episode PNG map dumps.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::geometry::{Channel, GridGeometry, OccupancyGrid};
use crate::harness::replay::ReplayOutcome;

pub const REPORT_COLUMNS: [&str; 12] = [
    "method",
    "scenario",
    "median_translation_m",
    "median_rotation_deg",
    "ego_mse",
    "global_mse",
    "explored_area_m2",
    "explored_ratio",
    "collision_ratio",
    "pointnav_success",
    "spl",
    "log_hash",
];

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsRow {
    pub method: String,
    pub scenario: String,
    pub median_translation_m: f64,
    pub median_rotation_deg: f64,
    pub ego_mse: f64,
    pub global_mse: f64,
    pub explored_area_m2: f64,
    pub explored_ratio: f64,
    pub collision_ratio: f64,
    pub pointnav_success: f64,
    pub spl: f64,
    /// Hash of the log set the replay metrics came from.
    pub log_hash: u64,
    /// True for ground-truth-assisted ceilings, never for contenders.
    pub oracle: bool,
}

impl MetricsRow {
    pub fn from_replay(
        method: &str,
        scenario: &str,
        replay: &ReplayOutcome,
        pointnav_success: f64,
        spl: f64,
        log_hash: u64,
    ) -> Self {
        MetricsRow {
            method: method.into(),
            scenario: scenario.into(),
            median_translation_m: replay.pose.translation,
            median_rotation_deg: replay.pose.rotation,
            ego_mse: replay.ego_mse,
            global_mse: replay.global_mse,
            explored_area_m2: replay.explored_area_m2,
            explored_ratio: replay.explored_ratio,
            collision_ratio: replay.collision_ratio,
            pointnav_success,
            spl,
            log_hash,
            oracle: false,
        }
    }

    fn cells(&self) -> Vec<String> {
        let method = if self.oracle {
            format!("{} (oracle)", self.method)
        } else {
            self.method.clone()
        };
        vec![
            method,
            self.scenario.clone(),
            format!("{:.6}", self.median_translation_m),
            format!("{:.6}", self.median_rotation_deg),
            format!("{:.6}", self.ego_mse),
            format!("{:.6}", self.global_mse),
            format!("{:.6}", self.explored_area_m2),
            format!("{:.6}", self.explored_ratio),
            format!("{:.6}", self.collision_ratio),
            format!("{:.6}", self.pointnav_success),
            format!("{:.6}", self.spl),
            format!("{:016x}", self.log_hash),
        ]
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct MetricsReport {
    pub rows: Vec<MetricsRow>,
}

impl MetricsReport {
    pub fn to_csv(&self) -> String {
        let mut out = REPORT_COLUMNS.join(",");
        out.push('\n');
        for row in &self.rows {
            out.push_str(&row.cells().join(","));
            out.push('\n');
        }
        out
    }

    pub fn to_text(&self) -> String {
        let header: Vec<String> = REPORT_COLUMNS.iter().map(|c| c.to_string()).collect();
        let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
        let rows: Vec<Vec<String>> = self.rows.iter().map(|r| r.cells()).collect();
        for row in &rows {
            for (w, cell) in widths.iter_mut().zip(row) {
                *w = (*w).max(cell.len());
            }
        }
        let fmt_line = |cells: &[String]| -> String {
            cells
                .iter()
                .zip(&widths)
                .map(|(c, w)| format!("{c:<w$}"))
                .collect::<Vec<_>>()
                .join("  ")
                .trim_end()
                .to_string()
        };
        let mut out = fmt_line(&header);
        out.push('\n');
        out.push_str(&"-".repeat(widths.iter().sum::<usize>() + 2 * (widths.len() - 1)));
        out.push('\n');
        for row in &rows {
            out.push_str(&fmt_line(row));
            out.push('\n');
        }
        out
    }

    /// Write report.csv, report.txt and report.json under `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("report.csv"), self.to_csv())?;
        std::fs::write(dir.join("report.txt"), self.to_text())?;
        std::fs::write(dir.join("report.json"), serde_json::to_vec_pretty(self)?)?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let text = std::fs::read(dir.join("report.json"))?;
        Ok(serde_json::from_slice(&text)?)
    }

    pub fn row(&self, method: &str) -> Result<&MetricsRow> {
        self.rows
            .iter()
            .find(|r| r.method == method)
            .ok_or_else(|| Error::SchemaMismatch(format!("no row for method {method}")))
    }
}

/// Dump a [1,2,h,w] map tensor as PNGs (one per channel), with an optional
/// trajectory burned into the obstacle image as bright pixels.
pub fn dump_map_png(
    map: &Tensor,
    geom: &GridGeometry<f32>,
    trajectory_cells: &[(usize, usize)],
    stem: &Path,
) -> Result<()> {
    let mut grid = OccupancyGrid::from_tensor(map, *geom)?;
    for &(r, c) in trajectory_cells {
        if r < geom.height && c < geom.width {
            let i = grid.idx(r, c);
            grid.channel_mut(Channel::Obstacle)[i] = 1.0;
        }
    }
    crate::geometry::write_grid_png(
        &grid,
        Channel::Obstacle,
        &stem.with_extension("obstacle.png"),
    )?;
    crate::geometry::write_grid_png(
        &grid,
        Channel::Explored,
        &stem.with_extension("explored.png"),
    )?;
    Ok(())
}

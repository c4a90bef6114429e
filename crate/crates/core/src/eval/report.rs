use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use super::{evaluate_by_weather, EvalError, EvaluationInput, WeatherScores};
use crate::features::{MeteorologyMode, WeatherType};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Nmae,
    Nrmse,
}

impl Metric {
    pub const ALL: [Metric; 2] = [Metric::Nmae, Metric::Nrmse];

    pub fn label(self) -> &'static str {
        match self {
            Metric::Nmae => "nmae",
            Metric::Nrmse => "nrmse",
        }
    }

    pub fn title(self) -> &'static str {
        match self {
            Metric::Nmae => "NMAE",
            Metric::Nrmse => "NRMSE",
        }
    }
}

/// One cell of the comparison grid.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CellKey {
    pub plant: String,
    pub method: String,
    pub mode: MeteorologyMode,
}

impl CellKey {
    pub fn new(plant: impl Into<String>, method: impl Into<String>, mode: MeteorologyMode) -> Self {
        Self {
            plant: plant.into(),
            method: method.into(),
            mode,
        }
    }
}

impl fmt::Display for CellKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}/{}", self.plant, self.method, self.mode.label())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellScores {
    pub key: CellKey,
    pub scores: WeatherScores,
}

/// Scores every cell, in parallel, keeping the input order.
pub fn evaluate_grid(inputs: Vec<(CellKey, EvaluationInput)>) -> Result<Vec<CellScores>, EvalError> {
    inputs
        .into_par_iter()
        .map(|(key, input)| {
            Ok(CellScores {
                key,
                scores: evaluate_by_weather(&input)?,
            })
        })
        .collect()
}

/// One row of the long-format report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportEntry {
    pub plant: String,
    pub method: String,
    pub mode: MeteorologyMode,
    /// `overall` or a weather class label.
    pub weather: String,
    pub metric: Metric,
    /// Percent, rounded to two decimals.
    pub value: f64,
    /// Lowest value among the methods for the same plant, mode, weather and
    /// metric. Ties are all flagged.
    pub best: bool,
}

pub const OVERALL: &str = "overall";

fn round2(x: f64) -> f64 {
    (x * 100.0).round() / 100.0
}

fn weather_slots() -> Vec<(&'static str, Option<WeatherType>)> {
    let mut slots = vec![(OVERALL, None)];
    slots.extend(WeatherType::ALL.iter().map(|&w| (w.label(), Some(w))));
    slots
}

/// Full cross-tabulation of plants, methods and meteorology modes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub plants: Vec<String>,
    pub methods: Vec<String>,
    pub modes: Vec<MeteorologyMode>,
    pub cells: Vec<CellScores>,
    pub entries: Vec<ReportEntry>,
}

/// Assembles the report for the grid `plants x methods x modes`. Every cell
/// must be present exactly once.
pub fn compare_methods(
    cells: Vec<CellScores>,
    plants: &[String],
    methods: &[String],
    modes: &[MeteorologyMode],
) -> Result<EvaluationReport, EvalError> {
    let mut by_key: BTreeMap<CellKey, CellScores> = BTreeMap::new();
    for cell in cells {
        let key = cell.key.clone();
        if by_key.insert(key.clone(), cell).is_some() {
            return Err(EvalError::DuplicateCell(key.to_string()));
        }
    }
    let mut ordered = Vec::new();
    let mut missing = Vec::new();
    for plant in plants {
        for &mode in modes {
            for method in methods {
                let key = CellKey::new(plant.clone(), method.clone(), mode);
                match by_key.remove(&key) {
                    Some(c) => ordered.push(c),
                    None => missing.push(key.to_string()),
                }
            }
        }
    }
    if !missing.is_empty() {
        return Err(EvalError::IncompleteGrid(missing));
    }
    if let Some(extra) = by_key.keys().next() {
        return Err(EvalError::InvalidInput(format!("cell {extra} is outside the requested grid")));
    }

    let mut entries = Vec::new();
    for row in ordered.chunks(methods.len().max(1)) {
        for (weather, class) in weather_slots() {
            for metric in Metric::ALL {
                let values: Vec<Option<f64>> = row
                    .iter()
                    .map(|c| {
                        let s = match class {
                            None => Some(c.scores.overall),
                            Some(w) => c.scores.by_class.get(&w).copied().flatten(),
                        };
                        s.map(|s| round2(s.get(metric)))
                    })
                    .collect();
                let min = values.iter().flatten().copied().fold(f64::INFINITY, f64::min);
                for (c, v) in row.iter().zip(&values) {
                    let Some(v) = *v else { continue };
                    entries.push(ReportEntry {
                        plant: c.key.plant.clone(),
                        method: c.key.method.clone(),
                        mode: c.key.mode,
                        weather: weather.to_owned(),
                        metric,
                        value: v,
                        best: v == min,
                    });
                }
            }
        }
    }
    Ok(EvaluationReport {
        plants: plants.to_vec(),
        methods: methods.to_vec(),
        modes: modes.to_vec(),
        cells: ordered,
        entries,
    })
}

/// A rendered table: a header row and labelled rows of optional values with
/// their best-in-group flags.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreTable {
    pub title: String,
    pub header: Vec<String>,
    pub rows: Vec<(String, Vec<Option<(f64, bool)>>)>,
}

impl ScoreTable {
    /// Markdown with values in percent to two decimals; best values are
    /// bold, absent values are `-`.
    pub fn to_markdown(&self) -> String {
        let mut out = format!("### {}\n\n|  | {} |\n", self.title, self.header.join(" | "));
        out.push_str(&format!("|---|{}\n", "---|".repeat(self.header.len())));
        for (label, cells) in &self.rows {
            let cells: Vec<String> = cells
                .iter()
                .map(|c| match c {
                    Some((v, true)) => format!("**{v:.2}%**"),
                    Some((v, false)) => format!("{v:.2}%"),
                    None => "-".to_owned(),
                })
                .collect();
            out.push_str(&format!("| {label} | {} |\n", cells.join(" | ")));
        }
        out
    }
}

impl EvaluationReport {
    pub fn entry(
        &self,
        plant: &str,
        method: &str,
        mode: MeteorologyMode,
        weather: &str,
        metric: Metric,
    ) -> Option<&ReportEntry> {
        self.entries.iter().find(|e| {
            e.plant == plant && e.method == method && e.mode == mode && e.weather == weather && e.metric == metric
        })
    }

    fn cell_value(&self, plant: &str, method: &str, mode: MeteorologyMode, weather: &str, metric: Metric) -> Option<(f64, bool)> {
        self.entry(plant, method, mode, weather, metric).map(|e| (e.value, e.best))
    }

    /// Metrics by method for one plant or site row.
    pub fn table_methods(&self, plant: &str, mode: MeteorologyMode) -> ScoreTable {
        ScoreTable {
            title: format!("Scores of {plant}, meteorology {}", mode.label()),
            header: self.methods.clone(),
            rows: Metric::ALL
                .iter()
                .map(|&m| {
                    let cells = self.methods.iter().map(|method| self.cell_value(plant, method, mode, OVERALL, m)).collect();
                    (m.title().to_owned(), cells)
                })
                .collect(),
        }
    }

    /// One row per plant, columns grouped by metric then method.
    pub fn table_plants(&self, mode: MeteorologyMode) -> ScoreTable {
        let header = Metric::ALL
            .iter()
            .flat_map(|m| self.methods.iter().map(move |method| format!("{} {method}", m.title())))
            .collect();
        let rows = self
            .plants
            .iter()
            .map(|plant| {
                let cells = Metric::ALL
                    .iter()
                    .flat_map(|&m| self.methods.iter().map(move |method| (m, method)))
                    .map(|(m, method)| self.cell_value(plant, method, mode, OVERALL, m))
                    .collect();
                (plant.clone(), cells)
            })
            .collect();
        ScoreTable {
            title: format!("Scores by plant, meteorology {}", mode.label()),
            header,
            rows,
        }
    }

    /// One row per method, columns grouped by metric then weather class.
    pub fn table_weather(&self, plant: &str, mode: MeteorologyMode) -> ScoreTable {
        let header = Metric::ALL
            .iter()
            .flat_map(|m| WeatherType::ALL.iter().map(move |w| format!("{} {}", m.title(), w.label())))
            .collect();
        let rows = self
            .methods
            .iter()
            .map(|method| {
                let cells = Metric::ALL
                    .iter()
                    .flat_map(|&m| WeatherType::ALL.iter().map(move |w| (m, w)))
                    .map(|(m, w)| self.cell_value(plant, method, mode, w.label(), m))
                    .collect();
                (method.clone(), cells)
            })
            .collect();
        ScoreTable {
            title: format!("Scores of {plant} by weather, meteorology {}", mode.label()),
            header,
            rows,
        }
    }

    /// Percentage of evaluated days per weather class, per plant.
    pub fn weather_shares(&self) -> BTreeMap<String, BTreeMap<WeatherType, f64>> {
        let mut out = BTreeMap::new();
        for c in &self.cells {
            out.entry(c.key.plant.clone()).or_insert_with(|| c.scores.shares.clone());
        }
        out
    }

    pub fn to_json(&self) -> Value {
        let mut cells = Map::new();
        for c in &self.cells {
            let mut weathers = Map::new();
            for (label, class) in weather_slots() {
                let s = match class {
                    None => Some(c.scores.overall),
                    Some(w) => c.scores.by_class.get(&w).copied().flatten(),
                };
                let v = s.map_or(Value::Null, |s| json!({"nmae": round2(s.nmae), "nrmse": round2(s.nrmse)}));
                weathers.insert(label.to_owned(), v);
            }
            let plant = cells.entry(c.key.plant.clone()).or_insert_with(|| json!({}));
            let mode = plant
                .as_object_mut()
                .expect("object")
                .entry(c.key.mode.label())
                .or_insert_with(|| json!({}));
            mode.as_object_mut()
                .expect("object")
                .insert(c.key.method.clone(), Value::Object(weathers));
        }
        let shares: Map<String, Value> = self
            .weather_shares()
            .into_iter()
            .map(|(plant, s)| {
                let m: Map<String, Value> = s.into_iter().map(|(w, v)| (w.label().to_owned(), json!(round2(v)))).collect();
                (plant, Value::Object(m))
            })
            .collect();
        let best: Vec<String> = self
            .entries
            .iter()
            .filter(|e| e.best)
            .map(|e| format!("{}/{}/{}/{}/{}", e.plant, e.mode.label(), e.weather, e.metric.label(), e.method))
            .collect();
        json!({
            "unit": "percent",
            "plants": self.plants,
            "methods": self.methods,
            "modes": self.modes.iter().map(|m| m.label()).collect::<Vec<_>>(),
            "scores": cells,
            "weather_shares": shares,
            "best": best,
        })
    }

    /// Long format: plant, method, mode, weather, metric, value, best.
    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<(), EvalError> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["plant", "method", "mode", "weather", "metric", "value", "best"])?;
        for e in &self.entries {
            w.write_record([
                e.plant.as_str(),
                e.method.as_str(),
                e.mode.label(),
                e.weather.as_str(),
                e.metric.label(),
                &format!("{:.2}", e.value),
                if e.best { "true" } else { "false" },
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Overall scores with one row per plant, mode and method, for
    /// score-versus-plant curves.
    pub fn write_plot_csv<W: std::io::Write>(&self, writer: W) -> Result<(), EvalError> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["plant", "mode", "method", "nmae", "nrmse"])?;
        for c in &self.cells {
            w.write_record([
                c.key.plant.as_str(),
                c.key.mode.label(),
                c.key.method.as_str(),
                &format!("{:.2}", c.scores.overall.nmae),
                &format!("{:.2}", c.scores.overall.nrmse),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// All tables for every mode: methods and weather tables for each site
    /// row present, and the by-plant table.
    pub fn tables_markdown(&self) -> String {
        let sites: BTreeSet<&str> = [super::SITE_INDIV, super::SITE_SUM].into_iter().collect();
        let headline: Vec<&String> = {
            let s: Vec<&String> = self.plants.iter().filter(|p| sites.contains(p.as_str())).collect();
            if s.is_empty() {
                self.plants.iter().collect()
            } else {
                s
            }
        };
        let mut out = String::new();
        for &mode in &self.modes {
            for plant in &headline {
                out.push_str(&self.table_methods(plant, mode).to_markdown());
                out.push('\n');
            }
            out.push_str(&self.table_plants(mode).to_markdown());
            out.push('\n');
            for plant in &headline {
                out.push_str(&self.table_weather(plant, mode).to_markdown());
                out.push('\n');
            }
        }
        out
    }

    /// Writes `report.csv`, `report.json`, `scores_by_plant.csv` and
    /// `tables.md` into `dir`.
    pub fn write_all(&self, dir: &Path) -> Result<(), EvalError> {
        fs::create_dir_all(dir)?;
        self.write_csv(fs::File::create(dir.join("report.csv"))?)?;
        fs::write(dir.join("report.json"), serde_json::to_string_pretty(&self.to_json())?)?;
        self.write_plot_csv(fs::File::create(dir.join("scores_by_plant.csv"))?)?;
        fs::write(dir.join("tables.md"), self.tables_markdown())?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::super::Scores;
    use super::*;

    fn cell(plant: &str, method: &str, mode: MeteorologyMode, nmae: f64, nrmse: f64) -> CellScores {
        let s = Scores { nmae, nrmse };
        CellScores {
            key: CellKey::new(plant, method, mode),
            scores: WeatherScores {
                overall: s,
                by_class: [(WeatherType::Sunny, Some(s)), (WeatherType::PartiallyCloudy, None), (WeatherType::OvercastRainy, None)]
                    .into_iter()
                    .collect(),
                shares: [(WeatherType::Sunny, 100.0), (WeatherType::PartiallyCloudy, 0.0), (WeatherType::OvercastRainy, 0.0)]
                    .into_iter()
                    .collect(),
            },
        }
    }

    fn names(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn two_by_two_grid_has_eight_overall_values() {
        use MeteorologyMode::*;
        let cells = vec![
            cell("site", "raw", Available, 3.0, 5.0),
            cell("site", "mstl", Available, 2.0, 6.0),
            cell("site", "raw", Unavailable, 4.0, 7.0),
            cell("site", "mstl", Unavailable, 4.0, 8.0),
        ];
        let r = compare_methods(cells, &names(&["site"]), &names(&["raw", "mstl"]), &[Available, Unavailable]).unwrap();
        let overall: Vec<&ReportEntry> = r.entries.iter().filter(|e| e.weather == OVERALL).collect();
        assert_eq!(overall.len(), 8);
        assert!(r.entry("site", "mstl", Available, OVERALL, Metric::Nmae).unwrap().best);
        assert!(!r.entry("site", "mstl", Available, OVERALL, Metric::Nrmse).unwrap().best);
        assert!(r.entry("site", "raw", Unavailable, OVERALL, Metric::Nmae).unwrap().best);
        assert!(r.entry("site", "mstl", Unavailable, OVERALL, Metric::Nmae).unwrap().best);
        assert!(r.entry("site", "raw", Available, "cloudy", Metric::Nmae).is_none());
    }

    #[test]
    fn missing_cells_are_listed() {
        let cells = vec![cell("site", "raw", MeteorologyMode::Available, 1.0, 1.0)];
        let err = compare_methods(
            cells,
            &names(&["site"]),
            &names(&["raw", "mstl"]),
            &[MeteorologyMode::Available],
        )
        .unwrap_err();
        assert!(matches!(err, EvalError::IncompleteGrid(m) if m == vec!["site/mstl/available".to_owned()]));
    }

    #[test]
    fn single_cell_report() {
        let cells = vec![cell("p", "raw", MeteorologyMode::Available, 1.234, 2.345)];
        let r = compare_methods(cells, &names(&["p"]), &names(&["raw"]), &[MeteorologyMode::Available]).unwrap();
        let mut buf = Vec::new();
        r.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.contains("p,raw,available,overall,nmae,1.23,true"));
        assert_eq!(r.to_json()["scores"]["p"]["available"]["raw"]["cloudy"], Value::Null);
        assert!(r.tables_markdown().contains("**1.23%**"));
    }
}

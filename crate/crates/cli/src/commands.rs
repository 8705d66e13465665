use std::fs;
use std::io::Write;
use std::path::Path;

use anyhow::Result;
use colrec::assemble::{build_index, read_collections_jsonl, write_collections_jsonl};
use colrec::corpus::{
    generate_synthetic, load_interactions, load_metadata, write_interactions, write_metadata,
};
use colrec::factorize::{export_embeddings, read_embeddings, write_embeddings, AlsTrainer};
use colrec::metrics::metrics_report;
use colrec::{
    build_collections_for_users, ClusterMethod, DimRedMethod, Error, FactorModel, MetricsReport,
    UserCollections,
};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::{RunConfig, ABLATION_FILE, GROUND_TRUTH_FILE, REPORT_FILE};

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    Ok(())
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(io_err(path))?;
    Ok(())
}

pub fn generate(config: &RunConfig, out: &mut dyn Write) -> Result<()> {
    let (dataset, metadata, truth) = generate_synthetic(&config.corpus)?;
    ensure_dir(&config.out)?;
    write_interactions(&dataset, config.out.join(crate::config::INTERACTIONS_FILE))?;
    write_metadata(&metadata, config.out.join(crate::config::METADATA_FILE))?;
    truth.write_json(config.out.join(GROUND_TRUTH_FILE))?;
    writeln!(
        out,
        "wrote {} interactions for {} users over {} items to {}",
        dataset.records().len(),
        dataset.n_users(),
        dataset.n_items(),
        config.out.display()
    )?;
    Ok(())
}

pub fn train(config: &RunConfig, out: &mut dyn Write) -> Result<()> {
    let dataset = load_interactions(config.interactions_path())?;
    let mut trainer = AlsTrainer::new(&dataset, &config.als)?;
    writeln!(out, "sweep\tobjective")?;
    writeln!(out, "0\t{:.12e}", trainer.objective())?;
    for sweep in 1..=config.als.sweeps {
        trainer.sweep();
        writeln!(out, "{sweep}\t{:.12e}", trainer.objective())?;
    }
    let path = config.embeddings_path();
    if let Some(dir) = path.parent() {
        ensure_dir(dir)?;
    }
    write_embeddings(&trainer.model(), &path)?;
    writeln!(out, "wrote {}", path.display())?;
    Ok(())
}

fn load_model(config: &RunConfig) -> Result<(FactorModel, Vec<u8>)> {
    let path = config.embeddings_path();
    let bytes = fs::read(&path).map_err(io_err(&path))?;
    Ok((read_embeddings(&bytes)?, bytes))
}

fn target_users(model: &FactorModel, subset: Option<&[String]>) -> Result<Vec<String>> {
    match subset {
        None => Ok(model.users.ids().to_vec()),
        Some(ids) => {
            for id in ids {
                model.user(id)?;
            }
            Ok(ids.to_vec())
        }
    }
}

fn recommend_with(
    model: &FactorModel,
    config: &RunConfig,
    users: &[String],
) -> Result<Vec<UserCollections>> {
    let metadata = load_metadata(config.metadata_path())?;
    let index = build_index(model, &config.pipeline)?;
    Ok(build_collections_for_users(
        users,
        model,
        &index,
        &metadata,
        &config.pipeline,
    )?)
}

pub fn recommend(config: &RunConfig, subset: Option<&[String]>, out: &mut dyn Write) -> Result<()> {
    let (model, _) = load_model(config)?;
    let users = target_users(&model, subset)?;
    let results = recommend_with(&model, config, &users)?;
    let path = config.collections_path();
    if let Some(dir) = path.parent() {
        ensure_dir(dir)?;
    }
    write_collections_jsonl(&results, &path)?;
    let total: usize = results.iter().map(|r| r.collections.len()).sum();
    writeln!(
        out,
        "wrote {total} collections for {} users to {}",
        results.len(),
        path.display()
    )?;
    Ok(())
}

/// Metrics plus what produced them, as one flat object.
#[derive(Debug, Serialize)]
pub struct EvaluationReport {
    #[serde(flatten)]
    pub metrics: MetricsReport,
    pub config_hash: String,
    pub seed: u64,
    pub n_users: usize,
    pub n_items: usize,
    pub n_interactions: usize,
    pub n_evaluated_users: usize,
}

fn evaluate_results(
    config: &RunConfig,
    results: &[UserCollections],
    model: &FactorModel,
) -> Result<EvaluationReport> {
    let history = load_interactions(config.interactions_path())?;
    let metadata = load_metadata(config.metadata_path())?;
    let metrics = metrics_report(results, &history, &metadata, &model.items)?;
    Ok(EvaluationReport {
        metrics,
        config_hash: config.hash(),
        seed: config.seed,
        n_users: history.n_users(),
        n_items: history.n_items(),
        n_interactions: history.records().len(),
        n_evaluated_users: results.len(),
    })
}

const COLUMNS: [&str; 7] = [
    "run",
    "collections/user",
    "language noise %",
    "intra-cluster noise %",
    "title overlap %",
    "artist relevancy %",
    "average rank",
];

fn cell(value: Option<f64>) -> String {
    value.map_or_else(|| "undefined".to_owned(), |v| format!("{v:.2}"))
}

pub fn print_table(rows: &[(String, &MetricsReport)], out: &mut dyn Write) -> Result<()> {
    writeln!(out, "{}", COLUMNS.join(" | "))?;
    for (name, report) in rows {
        let cells: Vec<String> = report.rows().iter().map(|&(_, v)| cell(v)).collect();
        writeln!(out, "{name} | {}", cells.join(" | "))?;
    }
    Ok(())
}

pub fn evaluate(config: &RunConfig, out: &mut dyn Write) -> Result<()> {
    let results = read_collections_jsonl(config.collections_path())?;
    let (model, _) = load_model(config)?;
    let report = evaluate_results(config, &results, &model)?;
    ensure_dir(&config.out)?;
    write_json(&report, &config.out.join(REPORT_FILE))?;
    let name = format!("{}+{}", config.pipeline.dimred, config.pipeline.cluster);
    print_table(&[(name, &report.metrics)], out)
}

#[derive(Debug, Serialize)]
struct AblationCell {
    dimred: DimRedMethod,
    cluster: ClusterMethod,
    embeddings_sha256: String,
    report: EvaluationReport,
}

#[derive(Debug, Serialize)]
struct Ablation {
    embeddings_sha256: String,
    cells: Vec<AblationCell>,
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn ablate(config: &RunConfig, subset: Option<&[String]>, out: &mut dyn Write) -> Result<()> {
    let (model, bytes) = load_model(config)?;
    let file_hash = sha256_hex(&bytes);
    let users = target_users(&model, subset)?;
    let mut cells = Vec::new();
    for dimred in DimRedMethod::ALL {
        for cluster in ClusterMethod::ALL {
            let mut cell_config = config.clone();
            cell_config.pipeline.dimred = dimred;
            cell_config.pipeline.cluster = cluster;
            let results = recommend_with(&model, &cell_config, &users)?;
            let report = evaluate_results(&cell_config, &results, &model)?;
            let used = sha256_hex(&export_embeddings(&model)?);
            if used != file_hash {
                return Err(Error::Format(format!(
                    "embeddings changed during the {dimred}+{cluster} cell"
                ))
                .into());
            }
            eprintln!("finished {dimred}+{cluster}");
            cells.push(AblationCell {
                dimred,
                cluster,
                embeddings_sha256: used,
                report,
            });
        }
    }
    ensure_dir(&config.out)?;
    let ablation = Ablation {
        embeddings_sha256: file_hash,
        cells,
    };
    write_json(&ablation, &config.out.join(ABLATION_FILE))?;
    let rows: Vec<(String, &MetricsReport)> = ablation
        .cells
        .iter()
        .map(|c| (format!("{}+{}", c.dimred, c.cluster), &c.report.metrics))
        .collect();
    print_table(&rows, out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn undefined_cells() {
        assert_eq!(cell(None), "undefined");
        assert_eq!(cell(Some(2.0)), "2.00");
    }

    #[test]
    fn report_is_flat() {
        let report = EvaluationReport {
            metrics: MetricsReport {
                avg_collections_per_user: 0.0,
                language_noise_pct: None,
                intra_cluster_noise_pct: None,
                title_overlap_user_pct: None,
                artist_relevancy_pct: None,
                average_rank: None,
            },
            config_hash: "h".into(),
            seed: 1,
            n_users: 2,
            n_items: 3,
            n_interactions: 4,
            n_evaluated_users: 0,
        };
        let v = serde_json::to_value(&report).unwrap();
        let obj = v.as_object().unwrap();
        assert!(obj.values().all(|v| !v.is_object() && !v.is_array()));
        assert!(obj["language_noise_pct"].is_null());
        assert_eq!(obj["config_hash"], "h");
    }
}

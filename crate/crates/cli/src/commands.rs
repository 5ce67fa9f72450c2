use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use pure_core::attribution::{attribute, save_batch, Aggregation, AttributionMeta, LrpParams, Method};
use pure_core::dataset::{read_labels, write_tsv, Dataset};
use pure_core::evaluation::{
    cluster_embeddings, distance_correlation, intra_inter, pairwise_euclidean, pca_project, purity, scatter_svg,
    ClusterLabels, CorrelationKind, CorrelationOptions, EmbeddingSet,
};
use pure_core::netcore::{forward, load_network, save_network, LayerKind, Network, NeuronTarget};
use pure_core::purify::{
    activation_row, assign_circuit, load_model, purify_by_activation, purify_neuron, save_model, FeatureSource,
    PurifyConfig, MODEL_FILE,
};
use pure_core::synthbench::{build_poly_network, generate_samples, run_benchmark, BenchmarkSettings, Geometry, PolyNeuronSpec};
use pure_core::vizcrop::{feature_visualization, save_png, CropParams, Preset, SignMode};
use pure_core::{ntfile, Error, Result, Tensor};
use serde_json::json;

use crate::{
    AggregationArg, AssignArgs, BenchArgs, CropArgs, EvaluateArgs, InspectArgs, MethodArg, MethodArgs, PresetArg,
    PurifyArgs, ReductionArg, TargetArgs,
};

fn method(a: &MethodArgs) -> Result<Method> {
    match a.method {
        MethodArg::Gradact => Ok(Method::GradAct),
        MethodArg::Lrp => Ok(Method::Lrp(LrpParams::new(a.epsilon)?)),
    }
}

fn target(net: &Network, a: &TargetArgs) -> Result<NeuronTarget> {
    let shape = net.shape_at(net.position(&a.layer)?);
    let t = match a.reduction {
        ReductionArg::Scalar => NeuronTarget::scalar(&a.layer, a.neuron),
        ReductionArg::SpatialMax => NeuronTarget::spatial_max(&a.layer, a.neuron),
        ReductionArg::Auto if shape.len() == 3 => NeuronTarget::spatial_max(&a.layer, a.neuron),
        ReductionArg::Auto => NeuronTarget::scalar(&a.layer, a.neuron),
    };
    t.validate(shape)?;
    Ok(t)
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("json values serialize");
    fs::write(path, text + "\n").map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::Io {
        path: dir.to_path_buf(),
        source: e,
    })
}

pub fn purify(a: PurifyArgs) -> Result<()> {
    let net = load_network(&a.target.network)?;
    let target = target(&net, &a.target)?;
    let dataset = Dataset::load(&a.dataset)?;
    let config = PurifyConfig {
        n_ref: a.n_ref,
        k: a.k,
        seed: a.seed,
        max_iter: a.max_iter,
        tol: a.tol,
        method: method(&a.method)?,
        aggregation: match a.aggregation {
            AggregationArg::ChannelSum => Aggregation::ChannelSum,
            AggregationArg::Flatten => Aggregation::Flatten,
        },
        at_layer: a.at_layer.clone(),
        row_norm: a.row_norm,
        standardize: a.standardize,
    };
    let run = if a.activation {
        purify_by_activation(&net, &dataset, &target, &config)?
    } else {
        purify_neuron(&net, &dataset, &target, &config)?
    };

    create_dir(&a.out)?;
    save_model(&run.model, &a.out)?;
    let (stem, method_name, epsilon) = if a.activation {
        ("activations", "activation".to_string(), None)
    } else {
        ("attributions", config.method.name().to_string(), config.method.epsilon())
    };
    let ids: Vec<String> = run.references.ids().map(str::to_string).collect();
    save_batch(
        &a.out.join(stem),
        &run.matrix,
        &AttributionMeta {
            target: target.clone(),
            layer: run.model.layer.clone(),
            aggregation: config.aggregation,
            method: method_name,
            epsilon,
            sample_ids: ids.clone(),
        },
    )?;
    let score_rows: Vec<(String, String)> =
        run.references.entries.iter().map(|(id, s)| (id.clone(), s.to_string())).collect();
    write_tsv(&a.out.join("refset.tsv"), &score_rows)?;
    let assignments: Vec<(String, String)> =
        ids.iter().zip(&run.model.labels).map(|(id, l)| (id.clone(), l.to_string())).collect();
    write_tsv(&a.out.join("assignments.tsv"), &assignments)?;
    for (rank, vn) in run.virtual_neurons.iter().enumerate() {
        let rows: Vec<(String, String)> = run
            .references
            .entries
            .iter()
            .filter(|(id, _)| vn.members.contains(id))
            .map(|(id, s)| (id.clone(), s.to_string()))
            .collect();
        write_tsv(&a.out.join(format!("virtual_neuron_{rank}.tsv")), &rows)?;
        println!("virtual neuron {rank}: cluster {} with {} samples", vn.cluster, vn.members.len());
    }
    if run.matrix.rows() >= 2 {
        let pca = pca_project(&run.matrix, 2)?;
        let title = format!("{}[{}] on {}", target.layer, target.neuron, run.model.layer);
        write_text(&a.out.join("pca.svg"), &scatter_svg(&pca.scores, &run.model.labels, &title)?)?;
    }
    Ok(())
}

pub fn assign(a: AssignArgs) -> Result<()> {
    let model_path = if a.model.is_dir() { a.model.join(MODEL_FILE) } else { a.model.clone() };
    let model = load_model(&model_path)?;
    let sample = ntfile::read(&a.sample)?;
    let values = match &a.network {
        None => sample.into_data(),
        Some(p) => {
            let net = load_network(p)?;
            let trace = forward(&net, &sample)?;
            match &model.source {
                FeatureSource::Attribution { method, aggregation } => {
                    attribute(&net, &trace, &model.target, &model.layer, *method, *aggregation)?.values
                }
                FeatureSource::Activation => activation_row(trace.get(&model.layer)?),
            }
        }
    };
    let result = assign_circuit(&model, &values)?;
    println!("{}", serde_json::to_string_pretty(&result).expect("assignment serializes"));
    Ok(())
}

/// Looks up one label per embedding id.
fn labels_for(ids: &[String], path: &Path) -> Result<Vec<usize>> {
    let table: std::collections::HashMap<String, usize> = read_labels(path)?.into_iter().collect();
    ids.iter()
        .map(|id| {
            table
                .get(id)
                .copied()
                .ok_or_else(|| Error::MissingSample(format!("{id} (in {})", path.display())))
        })
        .collect()
}

fn reorder(emb: EmbeddingSet, ids: &[String]) -> Result<EmbeddingSet> {
    if emb.ids == ids {
        return Ok(emb);
    }
    let pos: std::collections::HashMap<&str, usize> = emb.ids.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
    let mut rows = Vec::with_capacity(ids.len());
    for id in ids {
        let &i = pos
            .get(id.as_str())
            .ok_or_else(|| Error::MissingSample(format!("{id} (in compared embeddings)")))?;
        rows.push(emb.vectors.row(i).to_vec());
    }
    EmbeddingSet::new(ids.to_vec(), Tensor::from_rows(&rows)?, emb.source)
}

pub fn evaluate(a: EvaluateArgs) -> Result<()> {
    let emb = EmbeddingSet::load(&a.embeddings, a.ids.as_deref(), "external")?;
    let (labels, source) = match &a.labels {
        Some(p) => (ClusterLabels::from_labels(labels_for(&emb.ids, p)?), "file"),
        None => (cluster_embeddings(&emb, a.k, a.seed)?, "kmeans"),
    };
    let d = pairwise_euclidean(&emb)?;
    let sep = intra_inter(&d, &labels)?;
    let purity_score = match &a.truth {
        Some(p) => Some(purity(&labels, &ClusterLabels::from_labels(labels_for(&emb.ids, p)?))?),
        None => None,
    };
    create_dir(&a.out)?;
    write_json(
        &a.out.join("separability.json"),
        &json!({
            "n": emb.len(),
            "k": labels.k(),
            "labels": source,
            "rho_intra": sep.rho_intra,
            "rho_inter": sep.rho_inter,
            "score": sep.score,
            "overall": sep.overall,
            "purity": purity_score,
        }),
    )?;
    if a.labels.is_none() {
        let rows: Vec<(String, String)> =
            emb.ids.iter().zip(labels.labels()).map(|(id, l)| (id.clone(), l.to_string())).collect();
        write_tsv(&a.out.join("labels.tsv"), &rows)?;
    }
    let compared = match &a.compare {
        Some(p) => {
            let other = reorder(EmbeddingSet::load(p, None, "external")?, &emb.ids)?;
            let d2 = pairwise_euclidean(&other)?;
            let opts = CorrelationOptions {
                kind: if a.spearman { CorrelationKind::Spearman } else { CorrelationKind::Pearson },
                partitions: a.partitions,
                seed: a.seed,
            };
            let report = distance_correlation(&d, &d2, &opts)?;
            write_json(
                &a.out.join("correlation.json"),
                &serde_json::to_value(&report).expect("report serializes"),
            )?;
            println!("distance correlation r = {}", report.r);
            Some(d2)
        }
        None => None,
    };
    if let Some(csv) = &a.pairs_csv {
        let mut text = String::from(if compared.is_some() { "i,j,distance,compared\n" } else { "i,j,distance\n" });
        for i in 0..d.n() {
            for j in i + 1..d.n() {
                write!(text, "{},{},{}", emb.ids[i], emb.ids[j], d.get(i, j)).unwrap();
                if let Some(d2) = &compared {
                    write!(text, ",{}", d2.get(i, j)).unwrap();
                }
                text.push('\n');
            }
        }
        write_text(csv, &text)?;
    }
    println!("rho_intra = {}, rho_inter = {}, score = {}", sep.rho_intra, sep.rho_inter, sep.score);
    Ok(())
}

fn bench_spec(a: &BenchArgs) -> PolyNeuronSpec {
    PolyNeuronSpec {
        n_features: a.n_features,
        distractor_count: a.distractors,
        distractor_amplitude: a.distractor_amplitude,
        noise_sigma: a.noise,
        geometry: Geometry::Vector { dim: a.dim },
        detectors_per_feature: a.detectors,
        ..PolyNeuronSpec::default()
    }
}

fn export_fixture(spec: &PolyNeuronSpec, settings: &BenchmarkSettings, seed: u64, dir: &Path) -> Result<()> {
    let spec = PolyNeuronSpec { seed, ..spec.clone() };
    let (net, gt) = build_poly_network(&spec)?;
    let (data, labels) = generate_samples(&gt, &spec, settings.n_samples, seed)?;
    create_dir(dir)?;
    save_network(&net, &dir.join("network.json"))?;
    data.save_dir(&dir.join("dataset"))?;
    let truth: Vec<(String, String)> = data.ids().iter().zip(&labels).map(|(id, l)| (id.clone(), l.to_string())).collect();
    write_tsv(&dir.join("truth.tsv"), &truth)?;
    let rows: Vec<Vec<f64>> = labels.iter().map(|&f| gt.template(f).to_vec()).collect();
    EmbeddingSet::new(data.ids().to_vec(), Tensor::from_rows(&rows)?, "synthetic")?.save(&dir.join("embeddings.nt"))?;
    write_json(
        &dir.join("target.json"),
        &json!({
            "layer": gt.target.layer,
            "neuron": gt.target.neuron,
            "attribution_layer": gt.attribution_layer,
            "feature_supports": gt.feature_supports,
            "distractor_supports": gt.distractor_supports,
        }),
    )
}

pub fn bench(a: BenchArgs) -> Result<()> {
    let spec = bench_spec(&a);
    let settings = BenchmarkSettings {
        spec: spec.clone(),
        n_samples: a.n_samples,
        n_ref: a.n_ref,
        k: a.k,
        seeds: (a.seed_start..a.seed_start + a.seeds).collect(),
        method: method(&a.method)?,
    };
    let report = run_benchmark(&settings)?;
    create_dir(&a.out)?;
    write_json(
        &a.out.join("report.json"),
        &serde_json::to_value(&report).expect("report serializes"),
    )?;
    println!(
        "purity: attribution {:.4} +- {:.4}, activation {:.4} +- {:.4} over {} seeds",
        report.pure.purity_mean,
        report.pure.purity_sem,
        report.activation.purity_mean,
        report.activation.purity_sem,
        report.seeds.len()
    );
    if let Some(dir) = &a.export {
        export_fixture(&spec, &settings, a.seed_start, dir)?;
    }
    Ok(())
}

pub fn crop(a: CropArgs) -> Result<()> {
    let net = load_network(&a.target.network)?;
    let target = target(&net, &a.target)?;
    let image = ntfile::read(&a.image)?;
    let mut params: CropParams = match a.preset {
        PresetArg::Eval => Preset::Eval.params(),
        PresetArg::Plot => Preset::Plot.params(),
    };
    if let Some(k) = a.kernel {
        params.kernel = k;
    }
    if let Some(t) = a.threshold {
        params.threshold = t;
    }
    if a.positive_part {
        params.sign = SignMode::PositivePart;
    }
    let viz = feature_visualization(&net, &image, &target, &params, method(&a.method)?)?;
    ntfile::write(&a.out, &viz.crop)?;
    if let Some(png) = &a.png {
        save_png(&viz.crop, png)?;
    }
    println!(
        "{}",
        serde_json::to_string_pretty(&json!({ "region": viz.region, "params": viz.params })).expect("serializes")
    );
    Ok(())
}

fn layer_params(kind: &LayerKind) -> usize {
    match kind {
        LayerKind::Dense { weights, bias } => weights.len() + bias.as_ref().map_or(0, Tensor::len),
        LayerKind::Conv2d { kernels, bias, .. } => kernels.len() + bias.as_ref().map_or(0, Tensor::len),
        LayerKind::FrozenBatchNorm { scale, .. } => 4 * scale.len(),
        _ => 0,
    }
}

pub fn inspect(a: InspectArgs) -> Result<()> {
    let net = load_network(&a.network)?;
    println!("input {:?}", net.input_shape());
    for (i, l) in net.layers().iter().enumerate() {
        println!(
            "{:>3}  {:<20} {:<17} {:<16} {}",
            i + 1,
            l.name,
            l.kind.tag(),
            format!("{:?}", net.shape_at(i + 1)),
            layer_params(&l.kind)
        );
    }
    println!("parameters {}", net.parameter_count());
    Ok(())
}

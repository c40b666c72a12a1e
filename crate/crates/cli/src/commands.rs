//! One function per subcommand.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use sl3d_core::encoder::EncoderModel;
use sl3d_core::eval::{
    align_classes, boxes_to_point_labels, knn_eval, map_at_iou, mean_purity, miou, DetectionRecord, MetricsReport,
};
use sl3d_core::gss::{generate_proposals, proposals_to_jsonl, records_to_jsonl, GssError};
use sl3d_core::pointset::{derive_seed, UNLABELED};
use sl3d_core::selflabel::{argmax, degeneracy_report, LabelSet};
use sl3d_core::trainloop::{accuracy, finetune, metrics_csv, train_selflabel, TrainError};

use crate::config::PipelineConfig;
use crate::data::{self, Objects};
use crate::Failure;

fn train_failure(e: TrainError) -> Failure {
    match e {
        TrainError::InvalidConfig(_) => Failure::usage(e.to_string()),
        TrainError::DatasetTooSmall { .. } | TrainError::LabelOutOfRange { .. } | TrainError::Io(_) => {
            Failure::data(e.to_string())
        }
        _ => Failure::internal(e.to_string()),
    }
}

fn write_resolved(config: &PipelineConfig, out: &Path) -> Result<(), Failure> {
    data::write_atomic(&out.join("config.txt"), config.to_text().as_bytes())
}

fn load_model(path: &Path) -> Result<EncoderModel, Failure> {
    EncoderModel::load(path).map_err(|e| Failure::data(format!("{}: {e}", path.display())))
}

fn write_model(model: &EncoderModel, path: &Path) -> Result<(), Failure> {
    data::write_atomic(path, model.to_tensor_file().to_text().as_bytes())
}

fn softmax(z: &[f64]) -> Vec<f64> {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - max).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

/// Training or evaluation objects: an object directory, or scenes cut by
/// their proposals.
fn load_training_objects(config: &PipelineConfig) -> Result<Objects, Failure> {
    let seed = config.train.seed;
    if let Some(dir) = config.optional("objects") {
        return data::load_objects(dir, config.sample_points, seed);
    }
    match (config.optional("scenes"), config.optional("proposals")) {
        (Some(scenes), Some(proposals)) => data::load_proposal_objects(scenes, proposals, config.sample_points, seed),
        _ => Err(Failure::usage("selflabel needs 'objects', or both 'scenes' and 'proposals'")),
    }
}

pub fn propose(config: &PipelineConfig) -> Result<(), Failure> {
    let scenes = config.require("scenes")?;
    let out = config.require("out")?;
    let files = data::cloud_files(scenes)?;
    let results = data::ordered_map(&files, config.jobs, |_, path| {
        let scene = data::load(path)?;
        let proposals = generate_proposals(&scene, &config.gss, config.train.seed).map_err(|e| match e {
            GssError::InvalidParameter(_) => Failure::usage(e.to_string()),
            _ => Failure::data(format!("{}: {e}", path.display())),
        })?;
        Ok::<_, Failure>((scene.id().to_string(), proposals))
    });
    let mut total = 0;
    for result in results {
        let (id, proposals) = result?;
        total += proposals.len();
        data::write_atomic(&data::proposals_path(out, &id), proposals_to_jsonl(&proposals).as_bytes())?;
    }
    write_resolved(config, out)?;
    let n = files.len();
    let mean = if n == 0 { 0.0 } else { total as f64 / n as f64 };
    println!("{n} scenes, {total} proposals, {mean:.2} proposals/scene");
    Ok(())
}

pub fn selflabel(config: &PipelineConfig) -> Result<(), Failure> {
    let out = config.require("out")?;
    let objects = load_training_objects(config)?;
    if objects.samples.is_empty() {
        return Err(Failure::data("dataset is empty"));
    }
    let gt = objects.complete_gt();
    let state = train_selflabel(&objects.samples, &config.train, gt.as_deref()).map_err(train_failure)?;

    write_model(&state.model, &out.join("model.ckpt"))?;
    data::write_atomic(&out.join("labels.csv"), state.labels.to_csv().as_bytes())?;
    data::write_atomic(&out.join("metrics.csv"), metrics_csv(&state.metrics).as_bytes())?;
    let mut relabels = String::from("epoch,loss_before,loss_after\n");
    for r in &state.relabels {
        writeln!(relabels, "{},{:?},{:?}", r.epoch, r.loss_before, r.loss_after).unwrap();
    }
    data::write_atomic(&out.join("relabels.csv"), relabels.as_bytes())?;
    write_resolved(config, out)?;

    let (entropy, occupancy) = degeneracy_report(&state.labels, config.train.k);
    println!(
        "{} objects, K={}, label entropy {entropy:.4} (max {:.4}), occupancy {occupancy:?}",
        objects.samples.len(),
        config.train.k,
        (config.train.k as f64).ln()
    );
    // Proposals of bare floor have no ground truth; score the rest.
    let scored: Vec<usize> = (0..objects.gt.len()).filter(|&i| objects.gt[i].is_some()).collect();
    if !scored.is_empty() {
        let subset = LabelSet {
            labels: scored.iter().map(|&i| state.labels.labels[i]).collect(),
            sample_ids: scored.iter().map(|&i| state.labels.sample_ids[i].clone()).collect(),
            classes: state.labels.classes,
        };
        let gt: Vec<u32> = scored.iter().filter_map(|&i| objects.gt[i]).collect();
        let purity = mean_purity(&subset, &gt).map_err(|e| Failure::internal(e.to_string()))?;
        let alignment = align_classes(&subset, &gt).map_err(|e| Failure::internal(e.to_string()))?;
        let json = serde_json::to_string_pretty(&alignment).expect("serializable alignment");
        data::write_atomic(&out.join("alignment.json"), json.as_bytes())?;
        println!(
            "mean purity {purity:.4} over {} labeled objects, obtained classes {}",
            scored.len(),
            alignment.obtained_classes
        );
    }
    Ok(())
}

pub fn export_labels(config: &PipelineConfig) -> Result<(), Failure> {
    let model = load_model(config.require("checkpoint")?)?;
    let scenes = config.require("scenes")?;
    let proposals_dir = config.require("proposals")?;
    let out = config.require("out")?;
    let alignment = config.optional("alignment").map(|p| data::read_alignment(p)).transpose()?;

    let mut labels = LabelSet { labels: Vec::new(), sample_ids: Vec::new(), classes: model.classes() };
    let mut counter = 0u64;
    let mut detections_total = 0;
    let files = data::cloud_files(scenes)?;
    for path in &files {
        let (scene, proposals) = data::load_scene_proposals(path, proposals_dir)?;
        let mut detections = Vec::new();
        let mut records = Vec::new();
        for (i, p) in proposals.iter().enumerate() {
            let cloud = scene.select(&p.point_indices).with_id(format!("{}#{i}", scene.id()));
            let sample = sl3d_core::pointset::prepare_object(&cloud, config.sample_points, derive_seed(config.train.seed, counter))
                .map_err(|e| Failure::data(format!("{}: {e}", cloud.id())))?;
            counter += 1;
            let (_, logits) = model.forward(&sample).map_err(|e| Failure::data(e.to_string()))?;
            let probs = softmax(&logits);
            let pseudo = argmax(&probs);
            labels.labels.push(pseudo);
            labels.sample_ids.push(cloud.id().to_string());
            let class = match &alignment {
                Some(a) => match a.map(pseudo) {
                    Some(c) => c,
                    None => continue,
                },
                None => pseudo as u32,
            };
            let det = DetectionRecord::new(scene.id(), p.bbox, class, probs[pseudo])
                .map_err(|e| Failure::internal(e.to_string()))?;
            let mut record = det.to_record();
            record.point_indices = p.point_indices.clone();
            records.push(record);
            detections.push(det);
        }
        let point_labels = boxes_to_point_labels(&detections, &scene).map_err(|e| Failure::internal(e.to_string()))?;
        detections_total += detections.len();
        data::write_atomic(&out.join(format!("{}.detections.jsonl", scene.id())), records_to_jsonl(&records).as_bytes())?;
        data::write_atomic(&out.join(format!("{}.seg.txt", scene.id())), data::point_labels_text(&point_labels).as_bytes())?;
    }
    data::write_atomic(&out.join("labels.csv"), labels.to_csv().as_bytes())?;
    write_resolved(config, out)?;
    println!("{} scenes, {} proposals labeled, {detections_total} detections", files.len(), labels.len());
    Ok(())
}

fn report(config: &PipelineConfig, metric: impl Into<String>, value: f64, per_class: BTreeMap<String, f64>) -> MetricsReport {
    MetricsReport { metric: metric.into(), value, per_class, config_digest: config.digest() }
}

fn write_reports(config: &PipelineConfig, reports: &[MetricsReport]) -> Result<(), Failure> {
    let table: String = reports.iter().map(MetricsReport::to_table).collect();
    print!("{table}");
    if let Some(out) = config.optional("out") {
        let json = serde_json::to_string_pretty(reports).expect("serializable reports");
        data::write_atomic(&out.join("metrics.json"), format!("{json}\n").as_bytes())?;
        data::write_atomic(&out.join("metrics.txt"), table.as_bytes())?;
        write_resolved(config, out)?;
    }
    Ok(())
}

/// Majority labels of every cloud in `dir`, keyed by file stem.
fn gt_labels_in(dir: &Path) -> Result<BTreeMap<String, u32>, Failure> {
    let mut out = BTreeMap::new();
    for path in data::cloud_files(dir)? {
        let cloud = data::load(&path)?;
        if let Some(l) = cloud.majority_label() {
            out.insert(cloud.id().to_string(), l);
        }
    }
    Ok(out)
}

fn embeddings(model: &EncoderModel, labeled: &[(sl3d_core::pointset::ObjectSample, u32)]) -> Result<(Vec<Vec<f64>>, Vec<u32>), Failure> {
    let mut emb = Vec::with_capacity(labeled.len());
    for (s, _) in labeled {
        emb.push(model.forward(s).map_err(|e| Failure::data(e.to_string()))?.0);
    }
    Ok((emb, labeled.iter().map(|(_, l)| *l).collect()))
}

fn eval_knn(config: &PipelineConfig) -> Result<Vec<MetricsReport>, Failure> {
    let model = load_model(config.require("checkpoint")?)?;
    let seed = config.train.seed;
    let train = data::load_objects(config.require("train_objects")?, config.sample_points, seed)?.labeled()?;
    let test = data::load_objects(config.require("test_objects")?, config.sample_points, derive_seed(seed, 1))?.labeled()?;
    let (train_emb, train_l) = embeddings(&model, &train)?;
    let (test_emb, test_l) = embeddings(&model, &test)?;
    let mut reports = Vec::new();
    for &k in &config.knn_k {
        let r = knn_eval(&train_emb, &train_l, &test_emb, &test_l, k).map_err(|e| Failure::data(e.to_string()))?;
        reports.push(report(config, format!("knn_top1@{k}"), r.top1, BTreeMap::new()));
        reports.push(report(config, format!("knn_top5@{k}"), r.top5, BTreeMap::new()));
    }
    Ok(reports)
}

pub fn eval(config: &PipelineConfig) -> Result<(), Failure> {
    let reports = match config.task.as_str() {
        "purity" => {
            let labels = data::read_labels(config.require("labels")?, config.train.k)?;
            let gt_map = gt_labels_in(config.require("objects")?)?;
            let gt: Vec<u32> = labels
                .sample_ids
                .iter()
                .map(|id| gt_map.get(id).copied().ok_or_else(|| Failure::data(format!("no ground truth for '{id}'"))))
                .collect::<Result<_, _>>()?;
            let purity = mean_purity(&labels, &gt).map_err(|e| Failure::data(e.to_string()))?;
            let alignment = align_classes(&labels, &gt).map_err(|e| Failure::data(e.to_string()))?;
            let mapping = alignment.mapping.iter().map(|(p, g)| (format!("pseudo_{p}"), *g as f64)).collect();
            vec![
                report(config, "mean_purity", purity, BTreeMap::new()),
                report(config, "obtained_classes", alignment.obtained_classes as f64, mapping),
            ]
        }
        "det" => {
            let preds = data::read_detections(config.require("predictions")?)?;
            let gt = data::read_detections(config.require("gt")?)?;
            let ap = map_at_iou(&preds, &gt, config.iou_threshold);
            let per_class = ap.per_class.iter().map(|(c, v)| (format!("class_{c}"), *v)).collect();
            vec![report(config, format!("mAP@{}", config.iou_threshold), ap.map, per_class)]
        }
        "seg" => {
            let pred_dir = config.require("predictions")?;
            let (mut preds, mut gts) = (Vec::new(), Vec::new());
            for path in data::cloud_files(config.require("scenes")?)? {
                let scene = data::load(&path)?;
                let gt = scene
                    .gt_labels()
                    .ok_or_else(|| Failure::data(format!("{}: scene has no labels", path.display())))?
                    .to_vec();
                let pred = data::parse_point_labels(&pred_dir.join(format!("{}.seg.txt", scene.id())))?;
                preds.push(pred);
                gts.push(gt);
            }
            let classes = if config.num_classes > 0 {
                config.num_classes
            } else {
                preds.iter().chain(&gts).flatten().filter(|&&l| l != UNLABELED).map(|&l| l as usize + 1).max().unwrap_or(0)
            };
            let r = miou(&preds, &gts, classes).map_err(|e| Failure::data(e.to_string()))?;
            let per_class =
                r.per_class.iter().enumerate().filter_map(|(c, v)| v.map(|v| (format!("class_{c}"), v))).collect();
            vec![report(config, "mIoU", r.miou, per_class)]
        }
        "knn" => eval_knn(config)?,
        "cls" => {
            let model = load_model(config.require("checkpoint")?)?;
            let seed = derive_seed(config.train.seed, 1);
            let test = data::load_objects(config.require("test_objects")?, config.sample_points, seed)?.labeled()?;
            let acc = accuracy(&model, &test).map_err(train_failure)?;
            vec![report(config, "top1_accuracy", acc, BTreeMap::new())]
        }
        other => return Err(Failure::usage(format!("unknown task '{other}'"))),
    };
    write_reports(config, &reports)
}

pub fn knn(config: &PipelineConfig) -> Result<(), Failure> {
    let reports = eval_knn(config)?;
    write_reports(config, &reports)
}

pub fn finetune_cmd(config: &PipelineConfig) -> Result<(), Failure> {
    let out = config.require("out")?;
    let pretrained = config.optional("checkpoint").map(|p| load_model(p)).transpose()?;
    let seed = config.train.seed;
    let train = data::load_objects(config.require("train_objects")?, config.sample_points, seed)?.labeled()?;
    let test = data::load_objects(config.require("test_objects")?, config.sample_points, derive_seed(seed, 1))?.labeled()?;
    let classes: BTreeSet<u32> = train.iter().chain(&test).map(|(_, l)| *l).collect();
    let num_classes = if config.num_classes > 0 {
        config.num_classes
    } else {
        classes.iter().next_back().map_or(0, |&c| c as usize + 1)
    };
    let mut train_config = config.train.clone();
    train_config.epochs = config.finetune_epochs;
    let (model, acc) = finetune(pretrained.as_ref(), &train, &test, &train_config, num_classes).map_err(train_failure)?;
    write_model(&model, &out.join("finetuned.ckpt"))?;
    let init = if pretrained.is_some() { "pretrained" } else { "random" };
    let per_class = BTreeMap::from([("num_classes".to_string(), num_classes as f64)]);
    write_reports(config, &[report(config, format!("top1_accuracy_{init}_init"), acc, per_class)])
}

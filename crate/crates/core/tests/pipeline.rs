use fedclust_core::data::{blobs2, rings};
use fedclust_core::dcn::DcnCheckpoint;
use fedclust_core::experiment::{
    export_embeddings, models_dir, run_experiment_with_workers, MetricsTable, RunStatus,
};
use fedclust_core::federation::{
    apply_disconnection, count_leaks, partition, run_ppfc_gan, run_ppfc_gan_seq, synthesize,
    toy_partition, ClientStatus,
};
use fedclust_core::{DcnConfig, ExperimentConfig, Method, PipelineConfig};

fn quick() -> PipelineConfig {
    let mut config = PipelineConfig::default();
    config.gan.epochs = 20;
    config.gan.generator_hidden = vec![32, 32];
    config.gan.discriminator_hidden = vec![32, 32];
    config.dcn = DcnConfig {
        encoder_hidden: vec![16, 16],
        latent_dim: 2,
        batch_norm: false,
        pretrain_epochs: 5,
        joint_epochs: 5,
        ..DcnConfig::default()
    };
    config
}

#[test]
fn toy_pipeline_is_deterministic() {
    let ds = blobs2();
    let part = toy_partition(&ds).unwrap();
    let a = run_ppfc_gan(&ds, &part, &[0, 1], &quick(), 11).unwrap();
    let b = run_ppfc_gan(&ds, &part, &[0, 1], &quick(), 11).unwrap();
    assert_eq!(a.predicted, b.predicted);
    assert_eq!(a.synthetic, b.synthetic);
    assert_eq!(a.model, b.model);
    let c = run_ppfc_gan(&ds, &part, &[0, 1], &quick(), 12).unwrap();
    assert_ne!(a.synthetic, c.synthetic);
}

#[test]
fn joint_and_sequential_variants_share_the_synthetic_pool() {
    let ds = blobs2();
    let part = toy_partition(&ds).unwrap();
    let joint = run_ppfc_gan(&ds, &part, &[0, 1], &quick(), 3).unwrap();
    let seq = run_ppfc_gan_seq(&ds, &part, &[0, 1], &quick(), 3).unwrap();
    let pool = synthesize(&ds, &part, &[0, 1], &quick(), 3).unwrap().pool;
    assert_eq!(joint.synthetic.as_ref(), Some(&pool));
    assert_eq!(seq.synthetic.as_ref(), Some(&pool));
    assert_eq!(pool.nrows(), ds.len());
}

#[test]
fn server_never_sees_real_rows() {
    let ds = rings();
    let part = partition(&ds, 2, 0.5, 1).unwrap();
    let run = run_ppfc_gan(&ds, &part, &[0, 1], &quick(), 1).unwrap();
    let audit = run.audit.unwrap();
    assert_eq!(audit.leaked_rows, 0);
    assert_eq!(audit.server_rows, ds.len());
    assert_eq!(audit.uploads, vec![1, 1]);
    assert_eq!(audit.downloads, vec![1, 1]);
    // The detector does fire on verbatim copies.
    assert_eq!(
        count_leaks(ds.features.view(), ds.features.view()),
        ds.len()
    );
}

#[test]
fn disconnected_clients_still_receive_labels() {
    let ds = rings();
    let part = partition(&ds, 3, 0.0, 2).unwrap();
    let survivors = apply_disconnection(&part, 0.5, 9).unwrap();
    assert_eq!(survivors.len(), 2);
    let run = run_ppfc_gan(&ds, &part, &survivors, &quick(), 2).unwrap();
    assert_eq!(run.predicted.len(), ds.len());
    let failed: Vec<usize> = run
        .clients
        .iter()
        .filter(|c| c.status == ClientStatus::Failed)
        .map(|c| c.client_id)
        .collect();
    assert_eq!(failed.len(), 1);
    let audit = run.audit.unwrap();
    for id in failed {
        assert_eq!(audit.uploads[id], 0);
        assert_eq!(audit.downloads[id], 1);
    }
    let privacy = run.privacy.unwrap();
    assert_eq!(privacy.clients.len(), 2);
    assert!(privacy
        .clients
        .iter()
        .all(|c| c.ratio == 1.0 && !c.violation));
}

#[test]
fn broadcast_checkpoint_reproduces_assignments() {
    let ds = blobs2();
    let part = toy_partition(&ds).unwrap();
    let run = run_ppfc_gan(&ds, &part, &[0, 1], &quick(), 4).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.json");
    run.model
        .as_ref()
        .unwrap()
        .checkpoint()
        .save(&path)
        .unwrap();
    let restored = DcnCheckpoint::load(&path).unwrap().to_model().unwrap();
    assert_eq!(restored.assign(ds.features.view()).unwrap(), run.predicted);
}

#[test]
fn sweep_writes_every_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = ExperimentConfig::from_toml(
        r#"
        name = "toy"
        dataset = "builtin:blobs2"
        partition = "toy_adversarial"
        methods = ["kmeans", "kfed", "ffcm", "ppfcgan_seq"]
        seeds = [1, 2]
        rates = [0.0, 0.5]
        "#,
    )
    .unwrap();
    config.pipeline = quick();
    config.output = dir.path().join("out");
    let table = run_experiment_with_workers(&config, 2).unwrap();
    // kmeans: 2 seeds; each federated method: 2 rates x 2 seeds.
    assert_eq!(table.rows.len(), 2 + 3 * 4);
    assert!(table.rows.iter().all(|r| r.status == RunStatus::Ok));
    let back = MetricsTable::read_csv(&config.output.join("metrics.csv")).unwrap();
    assert_eq!(back, table);
    assert!(models_dir(&config.output)
        .join("ppfcgan_seq-r0.5-s2.json")
        .exists());
    let emb = export_embeddings(&config.output, "ppfcgan_seq-r0-s1").unwrap();
    let text = std::fs::read_to_string(emb).unwrap();
    assert_eq!(text.lines().count(), 401);
    assert!(text.starts_with("id,z0,z1,predicted,true"));
    let kfed = table
        .rows
        .iter()
        .find(|r| r.method == Method::Kfed)
        .unwrap();
    assert!(kfed.nmi.unwrap() < 0.95);
}

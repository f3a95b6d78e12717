mod common;

use std::path::Path;

use culturegen::genclient::{MockFixture, RequestLogEntry};
use culturegen::pipeline::{Stage, StageStatus};
use culturegen::Error;

fn edit_fixture(setup: &Path, f: impl FnOnce(&mut MockFixture)) {
    let path = setup.join("mock.toml");
    let mut fx = MockFixture::load(&path).unwrap();
    f(&mut fx);
    std::fs::write(&path, toml::to_string(&fx).unwrap()).unwrap();
}

fn log_entries(ws: &Path) -> Vec<RequestLogEntry> {
    std::fs::read_to_string(ws.join("logs/requests.jsonl"))
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

#[test]
fn missing_dependency_is_reported() {
    let tmp = tempfile::tempdir().unwrap();
    let config = common::write_setup(&tmp.path().join("setup"), true, "");
    let p = common::open(&tmp.path().join("ws"), &config);
    match p.run(Stage::Extract) {
        Err(e @ Error::Dependency { .. }) => {
            assert_eq!(e.exit_code(), 1);
            assert!(e.to_string().contains("generate"), "{e}");
        }
        other => panic!("{other:?}"),
    }
    assert!(matches!(
        p.run(Stage::Report),
        Err(Error::Dependency { .. })
    ));
}

#[test]
fn modified_artifact_and_lock_are_detected() {
    let tmp = tempfile::tempdir().unwrap();
    let config = common::write_setup(&tmp.path().join("setup"), true, "");
    let ws = tmp.path().join("ws");
    let p = common::open(&ws, &config);
    p.run(Stage::Generate).unwrap();

    std::fs::write(ws.join(".lock"), "").unwrap();
    assert!(matches!(p.run(Stage::Extract), Err(Error::Locked(_))));
    std::fs::remove_file(ws.join(".lock")).unwrap();

    let gen = ws.join("generations/mock/food.jsonl");
    let mut text = std::fs::read_to_string(&gen).unwrap();
    text.push_str("\n");
    std::fs::write(&gen, text).unwrap();
    assert!(matches!(
        p.run(Stage::Extract),
        Err(Error::ArtifactModified { .. })
    ));
    assert!(!ws.join(".lock").exists());
}

#[test]
fn stages_rerun_when_upstream_changes() {
    let tmp = tempfile::tempdir().unwrap();
    let config = common::write_setup(&tmp.path().join("setup"), true, "");
    let ws = tmp.path().join("ws");
    let p = common::open(&ws, &config);
    p.run(Stage::Generate).unwrap();
    p.run(Stage::Extract).unwrap();
    assert_eq!(p.run(Stage::Extract).unwrap(), StageStatus::UpToDate);
    p.run(Stage::GenerateAgnostic).unwrap();
    assert_eq!(p.run(Stage::Extract).unwrap(), StageStatus::Ran);
    assert!(ws.join("candidates-agnostic/mock/food.jsonl").exists());
}

#[test]
fn auto_demographic_selection_picks_richest_culture_per_region() {
    let tmp = tempfile::tempdir().unwrap();
    let setup = tmp.path().join("setup");
    let config = common::write_setup(&setup, true, "");
    let text = std::fs::read_to_string(&config)
        .unwrap()
        .replace(r#"cultures = ["algeria", "china"]"#, r#"cultures = "auto""#);
    std::fs::write(&config, text).unwrap();
    edit_fixture(&setup, |fx| {
        fx.default_continuations = vec![" rice.".into()]
    });

    let ws = tmp.path().join("ws");
    let p = common::open(&ws, &config);
    assert!(matches!(
        p.run(Stage::GenerateDemographic),
        Err(Error::Dependency { .. })
    ));
    p.run(Stage::Generate).unwrap();
    p.run(Stage::Extract).unwrap();
    p.run(Stage::GenerateDemographic).unwrap();
    let selected: Vec<String> = serde_json::from_slice(
        &std::fs::read(ws.join("generations-demographic/mock/cultures.json")).unwrap(),
    )
    .unwrap();
    // Algeria and Morocco tie on three food candidates; roster order breaks it.
    let mut sorted = selected.clone();
    sorted.sort();
    assert_eq!(sorted, ["algeria", "china", "france", "mexico"]);
}

#[test]
fn backend_failures_give_partial_completion_and_resume() {
    let tmp = tempfile::tempdir().unwrap();
    let setup = tmp.path().join("setup");
    let config = common::write_setup(&setup, true, "");
    let text = std::fs::read_to_string(&config)
        .unwrap()
        .replace("max_attempts = 2", "max_attempts = 1");
    std::fs::write(&config, text).unwrap();
    edit_fixture(&setup, |fx| fx.transport_failures = 1);

    let ws = tmp.path().join("ws");
    let err = common::open(&ws, &config).run(Stage::Generate).unwrap_err();
    assert!(matches!(err, Error::Partial(_)), "{err}");
    assert_eq!(err.exit_code(), 3);

    edit_fixture(&setup, |fx| fx.transport_failures = 0);
    assert_eq!(
        common::open(&ws, &config).run(Stage::Generate).unwrap(),
        StageStatus::Ran
    );
    // 10 prompts x 10 batches succeed once each, plus the failed attempt.
    assert_eq!(
        log_entries(&ws)
            .iter()
            .filter(|e| e.kind == "sample")
            .count(),
        101
    );
}

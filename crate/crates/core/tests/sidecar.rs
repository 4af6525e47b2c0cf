mod common;

use std::fs;
use std::path::Path;

use common::{build, write_tree, RandomRepo};
use proptest::prelude::*;
use repograph::align::{align, compute_diff, recompute_if_stale};
use repograph::config::{CommunityConfig, RepoConfig};
use repograph::search::{evidence_sections, render_evidence_block};
use repograph::expand::{align_matches, expand, fold_context, Context, ExpansionConfig, LexicalMatch};
use repograph::sidecar::{
    build_sidecars, load_sidecar, refresh_sidecars, sidecar_path, sidecar_records, DEFAULT_CAP,
    DEFAULT_FLOW_MAX_LEN,
};
use repograph::Error;

const SAMPLE: &[(&str, &str)] = &[
    ("pkg/__init__.py", ""),
    ("pkg/a.py", "from . import b\n\n\nclass Widget(b.Base):\n    def run(self):\n        return b.helper()\n"),
    ("pkg/b.py", "class Base:\n    pass\n\n\ndef helper():\n    return 1\n"),
    ("pkg/c.py", "from pkg.b import helper\n\n\ndef main():\n    helper()\n    assist()\n\n\ndef assist():\n    pass\n"),
    ("tests/test_a.py", "from pkg.a import Widget\n\n\ndef test_run():\n    Widget().run()\n"),
    ("README.md", "# Sample\n\nSee pkg/a.py for the `Widget` class.\n"),
    ("pyproject.toml", "[tool.sample]\nentry = \"pkg.b\"\n"),
];

fn check_golden(name: &str, got: &str) {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name);
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        fs::write(&path, got).unwrap();
    }
    let want = fs::read_to_string(&path).unwrap_or_else(|_| panic!("missing golden {}", path.display()));
    assert_eq!(got, want, "golden {name} differs; rerun with UPDATE_GOLDEN=1 after review");
}

#[test]
fn sidecar_round_trips_and_matches_golden() {
    let dir = tempfile::tempdir().unwrap();
    write_tree(dir.path(), SAMPLE);
    let mut index = build(dir.path());
    let out = tempfile::tempdir().unwrap();
    refresh_sidecars(&index.graph, DEFAULT_CAP, DEFAULT_FLOW_MAX_LEN, out.path(), &mut index.manifest).unwrap();
    let records = sidecar_records(&index.graph, DEFAULT_CAP, DEFAULT_FLOW_MAX_LEN).unwrap();
    for (path, want) in &records {
        let got = load_sidecar(out.path(), path, &index.manifest).unwrap();
        assert_eq!(&got, want);
    }
    let text = fs::read_to_string(sidecar_path(out.path(), "pkg/b.py")).unwrap();
    check_golden("pkg_b.graph.json", &text);
}

#[test]
fn evidence_block_matches_golden() {
    let dir = tempfile::tempdir().unwrap();
    write_tree(dir.path(), SAMPLE);
    let index = build(dir.path());
    let g = &index.graph;
    let hits = [LexicalMatch { path: "pkg/b.py".into(), line: 5, column: 4, matched_text: "helper".into() }];
    let cfg = ExpansionConfig::default();
    let anchors = align_matches(&hits, g, cfg.anchors);
    let ctx = Context::new(cfg.budget);
    let gamma = expand(&anchors, g, &ctx, g.community(), &cfg).unwrap();
    let ctx = fold_context(&ctx, &anchors, &gamma);
    let records = sidecar_records(g, DEFAULT_CAP, DEFAULT_FLOW_MAX_LEN).unwrap();
    let sections = evidence_sections(&gamma, &ctx, DEFAULT_CAP, |p| Ok(records[p].clone())).unwrap();
    check_golden("evidence_block.txt", &render_evidence_block(&sections));
}

#[test]
fn missing_and_escaping_paths_are_not_found() {
    let dir = tempfile::tempdir().unwrap();
    write_tree(dir.path(), SAMPLE);
    let index = build(dir.path());
    let out = tempfile::tempdir().unwrap();
    build_sidecars(&index.graph, DEFAULT_CAP, out.path()).unwrap();
    for p in ["nope.py", "../pkg/a.py", "/etc/passwd"] {
        let err = load_sidecar(out.path(), p, &index.manifest).unwrap_err();
        assert!(matches!(err, Error::SidecarNotFound(_)), "{p}: {err:?}");
    }
}

#[test]
fn sidecars_go_stale_after_alignment_until_refreshed() {
    let dir = tempfile::tempdir().unwrap();
    write_tree(dir.path(), SAMPLE);
    let cfg = RepoConfig::default();
    let mut index = build(dir.path());
    let out = tempfile::tempdir().unwrap();
    refresh_sidecars(&index.graph, DEFAULT_CAP, DEFAULT_FLOW_MAX_LEN, out.path(), &mut index.manifest).unwrap();

    fs::write(dir.path().join("pkg/b.py"), "class Base:\n    pass\n\n\ndef helper():\n    return 2\n\n\ndef extra():\n    pass\n").unwrap();
    let diff = compute_diff(&index.manifest, dir.path(), &cfg.index).unwrap();
    let mut next = align(&index, &diff, dir.path(), &cfg).unwrap();
    let err = load_sidecar(out.path(), "pkg/b.py", &next.manifest).unwrap_err();
    assert!(matches!(err, Error::StaleSidecar { .. }), "{err:?}");
    // untouched files keep serving their earlier record
    load_sidecar(out.path(), "tests/test_a.py", &next.manifest).unwrap();

    let report = refresh_sidecars(&next.graph, DEFAULT_CAP, DEFAULT_FLOW_MAX_LEN, out.path(), &mut next.manifest).unwrap();
    assert!(report.written.contains(&"pkg/b.py".to_string()));
    assert!(!report.written.contains(&"tests/test_a.py".to_string()));
    let fresh = load_sidecar(out.path(), "pkg/b.py", &next.manifest).unwrap();
    assert_eq!(fresh.snapshot_id, next.manifest.snapshot_id);

    fs::remove_file(dir.path().join("pkg/c.py")).unwrap();
    let diff = compute_diff(&next.manifest, dir.path(), &cfg.index).unwrap();
    let mut last = align(&next, &diff, dir.path(), &cfg).unwrap();
    let report = refresh_sidecars(&last.graph, DEFAULT_CAP, DEFAULT_FLOW_MAX_LEN, out.path(), &mut last.manifest).unwrap();
    assert_eq!(report.removed, vec!["pkg/c.py".to_string()]);
    assert!(!sidecar_path(out.path(), "pkg/c.py").exists());
}

#[test]
fn records_need_communities() {
    let dir = tempfile::tempdir().unwrap();
    write_tree(dir.path(), SAMPLE);
    let g = build(dir.path()).graph.with_community(None);
    assert!(matches!(sidecar_records(&g, DEFAULT_CAP, DEFAULT_FLOW_MAX_LEN), Err(Error::MissingCommunities)));
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 12, ..ProptestConfig::default() })]

    #[test]
    fn refreshed_sidecars_equal_a_rebuild(seed in any::<u64>(), steps in 1usize..6) {
        let dir = tempfile::tempdir().unwrap();
        let mut repo = RandomRepo::new(seed, 12);
        repo.write(dir.path());
        let cfg = RepoConfig::default();
        let mut index = build(dir.path());
        let out = tempfile::tempdir().unwrap();
        refresh_sidecars(&index.graph, DEFAULT_CAP, DEFAULT_FLOW_MAX_LEN, out.path(), &mut index.manifest).unwrap();

        repo.edit(dir.path(), steps);
        let diff = compute_diff(&index.manifest, dir.path(), &cfg.index).unwrap();
        let aligned = align(&index, &diff, dir.path(), &cfg).unwrap();
        let mut aligned = recompute_if_stale(&aligned, 0.0, &CommunityConfig::default());
        refresh_sidecars(&aligned.graph, DEFAULT_CAP, DEFAULT_FLOW_MAX_LEN, out.path(), &mut aligned.manifest).unwrap();

        let rebuilt = build(dir.path());
        let want = sidecar_records(&rebuilt.graph, DEFAULT_CAP, DEFAULT_FLOW_MAX_LEN).unwrap();
        let mut on_disk = 0;
        for entry in walkdir(out.path()) {
            on_disk += usize::from(entry.ends_with(".graph.json"));
        }
        prop_assert_eq!(on_disk, want.len());
        for (path, w) in &want {
            let mut got = load_sidecar(out.path(), path, &aligned.manifest).unwrap();
            got.snapshot_id = w.snapshot_id.clone();
            prop_assert_eq!(&got, w);
        }
    }
}

fn walkdir(dir: &Path) -> Vec<String> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push(p.to_string_lossy().into_owned());
            }
        }
    }
    out
}

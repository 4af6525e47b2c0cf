#![allow(dead_code)]

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

pub const FIXTURE: &[(&str, &str)] = &[
    ("shop/__init__.py", ""),
    (
        "shop/cli.py",
        "from shop.app import serve\n\n\ndef main():\n    serve(8080)\n",
    ),
    (
        "shop/app.py",
        "from shop.handler import dispatch\n\n\ndef serve(port):\n    return dispatch(port)\n",
    ),
    (
        "shop/handler.py",
        "from shop import db\n\n\ndef dispatch(request):\n    return db.query(request)\n",
    ),
    (
        "shop/db.py",
        "class Connection:\n    pass\n\n\ndef query(sql):\n    return Connection()\n",
    ),
    (
        "shop/report.py",
        "from shop.db import query\n\n\ndef monthly():\n    return query(\"select 1\")\n",
    ),
    (
        "tests/test_handler.py",
        "from shop.handler import dispatch\n\n\ndef test_dispatch():\n    assert dispatch(1)\n",
    ),
    ("README.md", "# Shop\n\nEntry point is `shop/cli.py`; storage lives in shop/db.py.\n"),
];

pub fn write_fixture(root: &Path) {
    for (p, text) in FIXTURE {
        let full = root.join(p);
        fs::create_dir_all(full.parent().unwrap()).unwrap();
        fs::write(full, text).unwrap();
    }
}

pub fn run(root: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_repograph"))
        .arg("--repo")
        .arg(root)
        .args(args)
        .env_remove("REPOGRAPH_DIR")
        .env("RUST_LOG", "off")
        .output()
        .expect("binary runs")
}

pub fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

pub fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

pub fn check_golden(name: &str, got: &str) {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name);
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        fs::create_dir_all(path.parent().unwrap()).unwrap();
        fs::write(&path, got).unwrap();
    }
    let want = fs::read_to_string(&path).unwrap_or_else(|_| panic!("missing golden {}", path.display()));
    assert_eq!(got, want, "golden {name} differs");
}


use std::process::Command;

/// The report without its wall-time line.
fn strip_time(text: &str) -> String {
    text.lines().filter(|l| !l.starts_with("# wall_time_s=") && !l.contains("\"wall_time_s\"")).collect::<Vec<_>>().join("\n")
}

#[test]
fn binary_exit_codes_and_thread_cap() {
    let bin = env!("CARGO_BIN_EXE_ngca-lab");
    let status = |args: &[&str], threads: Option<&str>| {
        let mut c = Command::new(bin);
        c.args(args);
        if let Some(t) = threads {
            c.env("NGCA_LAB_THREADS", t);
        }
        c.output().unwrap()
    };
    assert_eq!(status(&["sphere-w", "--d", "4"], None).status.code(), Some(0));
    assert_eq!(status(&["moment-match", "--eps", "1e-20"], None).status.code(), Some(1));
    assert_eq!(status(&[], None).status.code(), Some(2));
    assert_eq!(status(&["sphere-w"], Some("zero")).status.code(), Some(2));
    assert_eq!(status(&["--help"], None).status.code(), Some(0));

    let args = ["c1-test", "--d", "8", "--n", "40", "--trials", "400"];
    let one = status(&args, Some("1"));
    let two = status(&args, Some("2"));
    assert_eq!(one.status.code(), two.status.code());
    let text = |o: &std::process::Output| strip_time(&String::from_utf8_lossy(&o.stdout));
    let (a, b) = (text(&one), text(&two));
    // The summary line carries the wall time too.
    let body = |s: &str| s.lines().filter(|l| !l.starts_with("c1-test:")).collect::<Vec<_>>().join("\n");
    assert_eq!(body(&a), body(&b));
}

//! Chain-of-thought traces: outline the target on the screenshot, send the
//! guidance prompt, and check the answer against the prompt's own rules.

use guicurate::client::{ClientConfig, MockSettings, ModelClient};
use guicurate::fixtures::write_fixture;
use guicurate::trace::{build_trace_request, generate_traces, OverlayStyle, TraceCheck};

fn main() -> guicurate::Result<()> {
    let dir = std::env::temp_dir().join("guicurate-cot-example");
    let files = write_fixture(&dir, 10, 3, true)?;
    let root = Some(files.image_root.as_path());

    let req = build_trace_request(&files.records[0], root, OverlayStyle::default())?;
    let overlay = dir.join("overlay_example.png");
    std::fs::write(&overlay, &req.image.bytes).expect("write overlay");
    println!("overlay written to {}", overlay.display());
    println!("prompt starts: {:?}", &req.prompt[..80]);

    let client = ModelClient::mock(ClientConfig::mock("mock-tracer"), MockSettings::default())?;
    let (rows, deferred) = generate_traces(
        &files.records,
        &client,
        root,
        OverlayStyle::default(),
        &TraceCheck::default(),
    )?;
    for r in &rows {
        println!("{} {:?}\n    {}", r.id, r.violations, r.trace);
    }
    println!(
        "clean {} / {}, deferred {}",
        rows.iter().filter(|r| r.is_clean()).count(),
        rows.len(),
        deferred.len()
    );
    Ok(())
}

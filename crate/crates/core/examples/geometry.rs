//! Center-hit scoring, box parsing, Qwen-style resizing and rescaling.

use guicurate::geometry::{
    center_hit, parse_bbox, rescale_bbox, smart_resize, BBox, ImageDims, ResizeBounds,
};

fn main() -> guicurate::Result<()> {
    let gt = BBox::new(440.0, 1000.0, 520.0, 1060.0)?;
    let output =
        "<think>The next-song arrow is at the bottom.</think><answer>[445,1016,508,1053]</answer>";
    let pred = parse_bbox(output).expect("the answer holds a box");
    println!(
        "parsed {pred}, center {:?}, hit = {}",
        pred.center(),
        center_hit(&pred, &gt)
    );

    // corners given in the wrong order are swapped, garbage yields nothing
    println!("swapped corners -> {:?}", parse_bbox("[50, 60, 10, 20]"));
    println!(
        "no box          -> {:?}",
        parse_bbox("click the play button")
    );

    let bounds = ResizeBounds::default();
    for (w, h) in [
        (1920, 1080),
        (100, 100),
        (280, 280),
        (3840, 2160),
        (20, 4000),
    ] {
        let r = smart_resize(ImageDims::new(w, h)?, bounds)?;
        println!(
            "smart_resize {w}x{h} -> {}x{} ({} px{})",
            r.dims.width,
            r.dims.height,
            r.dims.area(),
            if r.clamped { ", clamped" } else { "" }
        );
    }

    // a prediction made at model resolution mapped back to the screenshot
    let model = smart_resize(ImageDims::new(1920, 1080)?, bounds)?.dims;
    let at_model = BBox::new(279.0, 633.0, 318.0, 656.0)?;
    let back = rescale_bbox(&at_model, model, ImageDims::new(1920, 1080)?)?;
    println!("model-space {at_model} -> original {back}");
    Ok(())
}

//! Connected-component boundaries with hole infill.

use super::{BinaryImage, DetectError, DetectParams};

/// Clockwise 8-neighbourhood in image coordinates (y down), starting east.
const DIRS: [(i32, i32); 8] = [
    (1, 0),
    (1, 1),
    (0, 1),
    (-1, 1),
    (-1, 0),
    (-1, -1),
    (0, -1),
    (1, -1),
];
const WEST: usize = 4;

/// Closed 8-connected outer boundary of one filled component.
#[derive(Debug, Clone, PartialEq)]
pub struct Contour {
    /// Boundary pixels in tracing order; the last pixel is adjacent to the first.
    pub points: Vec<(i32, i32)>,
    /// Pixel count of the component after hole infill.
    pub area: usize,
    /// Sub-pixel edge points: midpoints between each boundary pixel and its
    /// background 4-neighbours, following the chain.
    pub edge_points: Vec<(f64, f64)>,
}

/// Component pixels after infill, in a local bounding box.
#[derive(Debug, Clone)]
pub(crate) struct FilledComponent {
    pub x0: i32,
    pub y0: i32,
    pub w: usize,
    pub h: usize,
    pub mask: Vec<bool>,
    pub area: usize,
    pub touches_border: bool,
}

impl FilledComponent {
    fn contains(&self, x: i32, y: i32) -> bool {
        let (lx, ly) = (x - self.x0, y - self.y0);
        lx >= 0
            && ly >= 0
            && (lx as usize) < self.w
            && (ly as usize) < self.h
            && self.mask[ly as usize * self.w + lx as usize]
    }
}

/// Labels 8-connected foreground components, fills their holes and drops
/// components nested inside another's filled region.
pub(crate) fn filled_components(img: &BinaryImage) -> Vec<FilledComponent> {
    let (w, h) = (img.width(), img.height());
    let mut label = vec![u32::MAX; w * h];
    let mut comps: Vec<(Vec<usize>, [usize; 4])> = Vec::new();
    let mut stack = Vec::new();
    for start in 0..w * h {
        if !img.data()[start] || label[start] != u32::MAX {
            continue;
        }
        let id = comps.len() as u32;
        let mut pixels = Vec::new();
        let mut bbox = [usize::MAX, usize::MAX, 0, 0];
        label[start] = id;
        stack.push(start);
        while let Some(i) = stack.pop() {
            pixels.push(i);
            let (x, y) = (i % w, i / w);
            bbox = [bbox[0].min(x), bbox[1].min(y), bbox[2].max(x), bbox[3].max(y)];
            for (dx, dy) in DIRS {
                let (nx, ny) = (x as i64 + dx as i64, y as i64 + dy as i64);
                if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
                    continue;
                }
                let j = ny as usize * w + nx as usize;
                if img.data()[j] && label[j] == u32::MAX {
                    label[j] = id;
                    stack.push(j);
                }
            }
        }
        comps.push((pixels, bbox));
    }

    // Outer components have strictly larger boxes than anything nested in
    // them, so visiting by decreasing box area sees containers first.
    let mut order: Vec<usize> = (0..comps.len()).collect();
    let box_area = |b: &[usize; 4]| (b[2] - b[0] + 1) * (b[3] - b[1] + 1);
    order.sort_by(|&a, &b| {
        box_area(&comps[b].1)
            .cmp(&box_area(&comps[a].1))
            .then(comps[a].0[0].cmp(&comps[b].0[0]))
    });

    let mut out: Vec<FilledComponent> = Vec::new();
    for idx in order {
        let (pixels, bbox) = &comps[idx];
        let (px, py) = ((pixels[0] % w) as i32, (pixels[0] / w) as i32);
        if out.iter().any(|c| c.contains(px, py)) {
            continue;
        }
        out.push(fill(pixels, bbox, w, h));
    }
    // restore raster order of first pixel for determinism independent of sorting
    out.sort_by_key(|c| {
        let first = c.mask.iter().position(|&m| m).unwrap_or(0);
        let (x, y) = (c.x0 + (first % c.w) as i32, c.y0 + (first / c.w) as i32);
        y as usize * w + x as usize
    });
    out
}

fn fill(pixels: &[usize], bbox: &[usize; 4], w: usize, h: usize) -> FilledComponent {
    // pad by one so the background flood can walk around the component
    let (x0, y0) = (bbox[0] as i32 - 1, bbox[1] as i32 - 1);
    let lw = bbox[2] - bbox[0] + 3;
    let lh = bbox[3] - bbox[1] + 3;
    let mut fg = vec![false; lw * lh];
    for &i in pixels {
        let (x, y) = ((i % w) as i32 - x0, (i / w) as i32 - y0);
        fg[y as usize * lw + x as usize] = true;
    }
    // 4-connected background flood from the padded border (dual of 8-connected foreground)
    let mut outside = vec![false; lw * lh];
    let mut stack = vec![0usize];
    outside[0] = true;
    while let Some(i) = stack.pop() {
        let (x, y) = (i % lw, i / lw);
        let mut visit = |nx: usize, ny: usize| {
            let j = ny * lw + nx;
            if !fg[j] && !outside[j] {
                outside[j] = true;
                stack.push(j);
            }
        };
        if x > 0 {
            visit(x - 1, y);
        }
        if x + 1 < lw {
            visit(x + 1, y);
        }
        if y > 0 {
            visit(x, y - 1);
        }
        if y + 1 < lh {
            visit(x, y + 1);
        }
    }
    let mask: Vec<bool> = outside.iter().map(|o| !o).collect();
    let area = mask.iter().filter(|&&m| m).count();
    let touches_border = bbox[0] == 0 || bbox[1] == 0 || bbox[2] + 1 == w || bbox[3] + 1 == h;
    FilledComponent {
        x0,
        y0,
        w: lw,
        h: lh,
        mask,
        area,
        touches_border,
    }
}

/// Moore-neighbour tracing of a filled component's outer boundary.
pub(crate) fn trace_boundary(c: &FilledComponent) -> Vec<(i32, i32)> {
    let fg = |x: i32, y: i32| c.contains(x, y);
    let first = c.mask.iter().position(|&m| m).expect("component is nonempty");
    let start = (c.x0 + (first % c.w) as i32, c.y0 + (first / c.w) as i32);

    let mut chain = vec![start];
    let mut cur = start;
    // the west neighbour of the first raster pixel is background
    let mut back = WEST;
    let mut first_move: Option<usize> = None;
    // each boundary pixel is entered at most 4 times
    let limit = 4 * c.area + 8;
    for _ in 0..limit {
        let mut found = None;
        for k in 1..=8 {
            let d = (back + k) % 8;
            let n = (cur.0 + DIRS[d].0, cur.1 + DIRS[d].1);
            if fg(n.0, n.1) {
                found = Some((n, d));
                break;
            }
        }
        let Some((next, d)) = found else {
            break; // isolated pixel
        };
        if cur == start {
            match first_move {
                None => first_move = Some(d),
                Some(d0) if d0 == d => break,
                Some(_) => {}
            }
        }
        // new backtrack: the last background neighbour examined, seen from `next`
        let prev = (cur.0 + DIRS[(d + 7) % 8].0, cur.1 + DIRS[(d + 7) % 8].1);
        let off = (prev.0 - next.0, prev.1 - next.1);
        back = DIRS
            .iter()
            .position(|&o| o == off)
            .expect("backtrack pixel is an 8-neighbour");
        chain.push(next);
        cur = next;
    }
    if chain.len() > 1 && chain.last() == chain.first() {
        chain.pop();
    }
    chain
}

fn crack_points(c: &FilledComponent, chain: &[(i32, i32)]) -> Vec<(f64, f64)> {
    let mut seen = std::collections::HashSet::new();
    let mut out = Vec::with_capacity(chain.len() * 2);
    for &(x, y) in chain {
        if !seen.insert((x, y)) {
            continue;
        }
        for (dx, dy) in [(1, 0), (0, 1), (-1, 0), (0, -1)] {
            if !c.contains(x + dx, y + dy) {
                out.push((
                    f64::from(x) + 0.5 * f64::from(dx),
                    f64::from(y) + 0.5 * f64::from(dy),
                ));
            }
        }
    }
    out
}

/// One boundary per surviving component. Holes are filled first, so nested
/// contours never appear. Components touching the image border or whose
/// filled area falls outside `[min_area, max_area]` are dropped.
pub fn extract_outer_contours(img: &BinaryImage, params: &DetectParams) -> Result<Vec<Contour>, DetectError> {
    let kept: Vec<FilledComponent> = filled_components(img)
        .into_iter()
        .filter(|c| !c.touches_border)
        .filter(|c| (params.min_area..=params.max_area).contains(&(c.area as f64)))
        .collect();
    if kept.len() > params.max_features {
        return Err(DetectError::TooManyFeatures {
            count: kept.len(),
            max: params.max_features,
        });
    }
    Ok(kept
        .iter()
        .map(|c| {
            let points = trace_boundary(c);
            let edge_points = crack_points(c, &points);
            Contour {
                points,
                area: c.area,
                edge_points,
            }
        })
        .collect())
}

/// Binary image of the filled components that survive the area and border
/// gates, for inspection.
pub(crate) fn filled_mask(img: &BinaryImage, params: &DetectParams) -> BinaryImage {
    let mut out = BinaryImage::new(img.width(), img.height());
    for c in filled_components(img) {
        if c.touches_border || !(params.min_area..=params.max_area).contains(&(c.area as f64)) {
            continue;
        }
        for ly in 0..c.h {
            for lx in 0..c.w {
                if c.mask[ly * c.w + lx] {
                    out.set((c.x0 + lx as i32) as usize, (c.y0 + ly as i32) as usize, true);
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> DetectParams {
        DetectParams::default()
    }

    fn disc(img: &mut BinaryImage, cx: f64, cy: f64, r: f64) {
        for y in 0..img.height() {
            for x in 0..img.width() {
                if (x as f64 - cx).powi(2) + (y as f64 - cy).powi(2) <= r * r {
                    img.set(x, y, true);
                }
            }
        }
    }

    fn is_closed_8_chain(points: &[(i32, i32)]) -> bool {
        let n = points.len();
        (0..n).all(|i| {
            let (a, b) = (points[i], points[(i + 1) % n]);
            (a.0 - b.0).abs() <= 1 && (a.1 - b.1).abs() <= 1 && a != b
        })
    }

    #[test]
    fn single_disc_gives_one_closed_chain() {
        let mut img = BinaryImage::new(64, 64);
        disc(&mut img, 30.0, 31.0, 8.0);
        let cs = extract_outer_contours(&img, &params()).unwrap();
        assert_eq!(cs.len(), 1);
        assert!(is_closed_8_chain(&cs[0].points));
        // every chain pixel is foreground with a 4-neighbour in the background
        for &(x, y) in &cs[0].points {
            assert!(img.get(x as usize, y as usize));
            let bg = [(1, 0), (-1, 0), (0, 1), (0, -1)]
                .iter()
                .any(|(dx, dy)| !img.get((x + dx) as usize, (y + dy) as usize));
            assert!(bg);
        }
        let area = img.data().iter().filter(|&&b| b).count();
        assert_eq!(cs[0].area, area);
    }

    #[test]
    fn donut_is_infilled() {
        let mut img = BinaryImage::new(64, 64);
        disc(&mut img, 32.0, 32.0, 12.0);
        let mut hole = BinaryImage::new(64, 64);
        disc(&mut hole, 32.0, 32.0, 6.0);
        for i in 0..64 * 64 {
            if hole.data()[i] {
                img.set(i % 64, i / 64, false);
            }
        }
        // a separate blob nested in the hole is absorbed as well
        img.set(32, 32, true);
        img.set(33, 32, true);
        let cs = extract_outer_contours(&img, &params()).unwrap();
        assert_eq!(cs.len(), 1);
        let mut full = BinaryImage::new(64, 64);
        disc(&mut full, 32.0, 32.0, 12.0);
        assert_eq!(cs[0].area, full.data().iter().filter(|&&b| b).count());
    }

    #[test]
    fn area_gate_drops_small_components() {
        let mut img = BinaryImage::new(64, 64);
        disc(&mut img, 20.0, 20.0, 5.0);
        img.set(50, 50, true);
        let cs = extract_outer_contours(&img, &params()).unwrap();
        assert_eq!(cs.len(), 1);
    }

    #[test]
    fn border_components_are_discarded() {
        let mut img = BinaryImage::new(32, 32);
        disc(&mut img, 0.0, 16.0, 5.0);
        assert!(extract_outer_contours(&img, &params()).unwrap().is_empty());
    }

    #[test]
    fn too_many_components_is_an_error() {
        let mut img = BinaryImage::new(200, 200);
        for k in 0..40 {
            disc(
                &mut img,
                10.0 + (k % 8) as f64 * 22.0,
                10.0 + (k / 8) as f64 * 22.0,
                3.0,
            );
        }
        let p = DetectParams {
            max_features: 32,
            ..params()
        };
        assert!(matches!(
            extract_outer_contours(&img, &p),
            Err(DetectError::TooManyFeatures { count: 40, max: 32 })
        ));
    }

    #[test]
    fn thin_shapes_trace_closed() {
        let mut img = BinaryImage::new(20, 20);
        // an L shape one pixel wide
        for x in 3..12 {
            img.set(x, 5, true);
        }
        for y in 5..14 {
            img.set(3, y, true);
        }
        let p = DetectParams {
            min_area: 1.0,
            ..params()
        };
        let cs = extract_outer_contours(&img, &p).unwrap();
        assert_eq!(cs.len(), 1);
        assert!(is_closed_8_chain(&cs[0].points));
        let distinct: std::collections::BTreeSet<_> = cs[0].points.iter().collect();
        assert_eq!(distinct.len(), 17);
    }
}

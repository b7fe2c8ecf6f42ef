//! Round-trip a map through the RRSM binary format and look at what the
//! reader says about damaged files.

use renyi_smooth::image::Dims;
use renyi_smooth::rrsm::{read_map, write_map, RrsmMap};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = std::env::temp_dir().join("rrsm_io_example");
    std::fs::create_dir_all(&dir)?;
    let path = dir.join("map.rrsm");

    let dims = Dims::new(2, 3, 1);
    let map = RrsmMap::from_f64(dims, &[0.3, 0.1, 0.2, 0.15, 0.05, 0.2])?;
    write_map(&path, &map)?;
    let back = read_map(&path)?;
    println!("{} -> {:?} {:?}", path.display(), back.dims, back.to_f64());

    let bytes = map.to_bytes();
    for (what, damaged) in [
        ("truncated", bytes[..bytes.len() - 3].to_vec()),
        ("bad magic", [b"RRSX".as_slice(), &bytes[4..]].concat()),
        ("trailing bytes", [bytes.as_slice(), &[0, 0, 0, 0]].concat()),
    ] {
        match RrsmMap::from_bytes(&damaged) {
            Ok(_) => println!("{what}: accepted?"),
            Err(e) => println!("{what}: {e}"),
        }
    }
    Ok(())
}

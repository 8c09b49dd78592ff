use super::network::{LayerSpec, Network};

/// First manifest line of every serialized network.
pub const FORMAT_TAG: &str = "nearfocus-network v1";

const END_MARKER: &str = "end";

/// Text manifest (format tag, input dimension, one line per layer, parameter count)
/// followed by the parameters as little-endian float32.
pub fn encode_network(net: &Network) -> Vec<u8> {
    let mut manifest = format!("{FORMAT_TAG}\ninput_dim {}\n", net.input_dim());
    for spec in net.specs() {
        let line = match spec {
            LayerSpec::Normalization { half_range } => format!("layer normalization {half_range:?}"),
            LayerSpec::FullyConnected { width } => format!("layer fully_connected {width}"),
            LayerSpec::Relu => "layer relu".to_string(),
            LayerSpec::Tanh => "layer tanh".to_string(),
            LayerSpec::Scale { bound } => format!("layer scale {bound:?}"),
        };
        manifest.push_str(&line);
        manifest.push('\n');
    }
    manifest.push_str(&format!("parameters {}\n{END_MARKER}\n", net.param_count()));

    let params = net.parameters();
    let mut out = manifest.into_bytes();
    out.reserve(params.len() * 4);
    for p in params {
        out.extend_from_slice(&(p as f32).to_le_bytes());
    }
    out
}

/// Inverse of [`encode_network`]. Parameters come back widened from float32 and the
/// optimizer state starts fresh.
pub fn decode_network(bytes: &[u8]) -> Result<Network, String> {
    let mut lines = Vec::new();
    let mut at = 0;
    loop {
        let Some(nl) = bytes[at..].iter().position(|&b| b == b'\n') else {
            return Err("manifest not terminated".into());
        };
        let line = std::str::from_utf8(&bytes[at..at + nl]).map_err(|_| "manifest is not utf-8")?;
        at += nl + 1;
        if line == END_MARKER {
            break;
        }
        lines.push(line);
    }
    let mut it = lines.into_iter();
    match it.next() {
        Some(tag) if tag == FORMAT_TAG => {}
        Some(tag) => return Err(format!("unknown format tag {tag:?}")),
        None => return Err("empty manifest".into()),
    }
    let input_dim = it
        .next()
        .and_then(|l| l.strip_prefix("input_dim "))
        .and_then(|v| v.parse::<usize>().ok())
        .ok_or("missing input_dim")?;

    let mut specs = Vec::new();
    let mut declared = None;
    for line in it {
        let mut words = line.split_whitespace();
        match (words.next(), words.next(), words.next()) {
            (Some("layer"), Some(kind), arg) => specs.push(parse_layer(kind, arg)?),
            (Some("parameters"), Some(n), None) => {
                declared = Some(n.parse::<usize>().map_err(|e| format!("parameters: {e}"))?)
            }
            _ => return Err(format!("unrecognized manifest line {line:?}")),
        }
    }
    let declared = declared.ok_or("missing parameter count")?;
    let mut net = Network::zeros(input_dim, specs).map_err(|e| e.to_string())?;
    if declared != net.param_count() {
        return Err(format!(
            "manifest declares {declared} parameters, layers imply {}",
            net.param_count()
        ));
    }
    let blob = &bytes[at..];
    if blob.len() != declared * 4 {
        return Err(format!(
            "parameter blob holds {} bytes, expected {}",
            blob.len(),
            declared * 4
        ));
    }
    let params: Vec<f64> = blob
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    net.set_parameters(&params).map_err(|e| e.to_string())?;
    Ok(net)
}

fn parse_layer(kind: &str, arg: Option<&str>) -> Result<LayerSpec, String> {
    let num = |a: Option<&str>| -> Result<f64, String> {
        a.ok_or(format!("layer {kind} needs an argument"))?
            .parse::<f64>()
            .map_err(|e| format!("layer {kind}: {e}"))
    };
    Ok(match kind {
        "normalization" => LayerSpec::Normalization { half_range: num(arg)? },
        "fully_connected" => LayerSpec::FullyConnected {
            width: arg
                .ok_or("fully_connected needs a width")?
                .parse()
                .map_err(|e| format!("fully_connected: {e}"))?,
        },
        "relu" => LayerSpec::Relu,
        "tanh" => LayerSpec::Tanh,
        "scale" => LayerSpec::Scale { bound: num(arg)? },
        other => return Err(format!("unknown layer kind {other:?}")),
    })
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::dnn::build_actor;

    #[test]
    fn round_trip_is_exact_at_float32() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let net = build_actor(3, true, &mut rng).unwrap();
        let once = decode_network(&encode_network(&net)).unwrap();
        let twice = decode_network(&encode_network(&once)).unwrap();
        assert_eq!(once, twice);
        for (a, b) in net.parameters().iter().zip(once.parameters()) {
            assert_eq!((*a as f32) as f64, b);
        }
        assert_eq!(once.specs(), net.specs());
    }

    #[test]
    fn truncated_blob_is_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let net = build_actor(2, false, &mut rng).unwrap();
        let mut bytes = encode_network(&net);
        bytes.truncate(bytes.len() - 3);
        let err = decode_network(&bytes).unwrap_err();
        assert!(err.contains("blob"), "{err}");
    }

    #[test]
    fn wrong_version_is_rejected() {
        let bytes = b"nearfocus-network v0\ninput_dim 1\nparameters 0\nend\n";
        assert!(decode_network(bytes).unwrap_err().contains("format tag"));
    }
}

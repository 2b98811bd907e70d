//! Decoded networks: layer descriptors, the canonical text rendering, shape
//! propagation and the JSON hand-off format for external trainers.

use std::fmt;

use serde_json::{Map, Number, Value};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PhenotypeError {
    #[error("layer {layer}: missing attribute `{key}`")]
    MissingAttr { layer: usize, key: String },
    #[error("layer {layer}: attribute `{key}` has invalid value `{value}`")]
    InvalidAttr {
        layer: usize,
        key: String,
        value: String,
    },
    #[error("duplicate attribute `{0}` in one layer")]
    DuplicateKey(String),
    #[error("layer has no attributes")]
    EmptyLayer,
    #[error("descriptor has no layers")]
    NoLayers,
    #[error("last layer is not a dense layer")]
    LastLayerNotDense,
    #[error("malformed descriptor: {0}")]
    Malformed(String),
}

pub type Attrs = Vec<(String, String)>;

/// One decoded layer. `attrs` keeps grammar order; for network layers the
/// first pair is `(layer, kind)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerDescriptor {
    pub kind: String,
    pub attrs: Attrs,
}

impl LayerDescriptor {
    pub fn new(attrs: Attrs) -> Result<Self, PhenotypeError> {
        let (first_key, first_value) = attrs.first().ok_or(PhenotypeError::EmptyLayer)?;
        for (i, (k, _)) in attrs.iter().enumerate() {
            if attrs[..i].iter().any(|(other, _)| other == k) {
                return Err(PhenotypeError::DuplicateKey(k.clone()));
            }
        }
        let kind = if first_key == "layer" {
            first_value.clone()
        } else {
            first_key.clone()
        };
        Ok(LayerDescriptor { kind, attrs })
    }

    /// True when the first pair is `(layer, kind)`.
    pub fn is_network_layer(&self) -> bool {
        self.attrs.first().is_some_and(|(k, _)| k == "layer")
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.attrs
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    fn set(&mut self, key: &str, value: String) {
        match self.attrs.iter_mut().find(|(k, _)| k == key) {
            Some(pair) => pair.1 = value,
            None => self.attrs.push((key.to_string(), value)),
        }
    }

    pub fn is_dense(&self) -> bool {
        self.is_network_layer() && self.kind == "fc"
    }

    pub fn is_spatial(&self) -> bool {
        self.is_network_layer() && matches!(self.kind.as_str(), "conv" | "pool-avg" | "pool-max")
    }
}

impl fmt::Display for LayerDescriptor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_pairs(f, &self.attrs)
    }
}

fn write_pairs(f: &mut impl fmt::Write, pairs: &[(String, String)]) -> fmt::Result {
    for (i, (k, v)) in pairs.iter().enumerate() {
        if i > 0 {
            f.write_char(' ')?;
        }
        write!(f, "{k}:{v}")?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct NetworkDescriptor {
    pub layers: Vec<LayerDescriptor>,
    pub learning: Attrs,
    pub augmentation: Attrs,
    pub output_units_override: Option<usize>,
}

impl NetworkDescriptor {
    /// Layers that are not the softmax classifier.
    pub fn hidden_layer_count(&self) -> usize {
        self.layers
            .iter()
            .filter(|l| l.get("act") != Some("softmax"))
            .count()
    }

    pub fn learning_attr(&self, key: &str) -> Option<&str> {
        self.learning
            .iter()
            .rev()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }
}

/// Canonical text form: one layer per line, then the learning and
/// augmentation sections on their own lines when present.
pub fn render(nd: &NetworkDescriptor) -> String {
    let mut out = String::new();
    for layer in &nd.layers {
        write_pairs(&mut out, &layer.attrs).expect("writing to a String");
        out.push('\n');
    }
    for section in [&nd.learning, &nd.augmentation] {
        if !section.is_empty() {
            write_pairs(&mut out, section).expect("writing to a String");
            out.push('\n');
        }
    }
    out
}

/// Reads the output of [`render`] back. Lines whose first key is `learning`
/// or `augmentation` go to the matching section.
pub fn parse_rendered(text: &str) -> Result<NetworkDescriptor, PhenotypeError> {
    let mut nd = NetworkDescriptor::default();
    for line in text.lines().map(str::trim).filter(|l| !l.is_empty()) {
        let attrs = line
            .split_whitespace()
            .map(|tok| {
                tok.split_once(':')
                    .filter(|(k, v)| !k.is_empty() && !v.is_empty())
                    .map(|(k, v)| (k.to_string(), v.to_string()))
                    .ok_or_else(|| PhenotypeError::Malformed(format!("bad pair `{tok}`")))
            })
            .collect::<Result<Attrs, _>>()?;
        route_layer(&mut nd, attrs)?;
    }
    Ok(nd)
}

/// Adds one decoded attribute sequence to the descriptor, routing learning
/// and augmentation settings to their sections.
pub(crate) fn route_layer(nd: &mut NetworkDescriptor, attrs: Attrs) -> Result<(), PhenotypeError> {
    match attrs.first().map(|(k, _)| k.as_str()) {
        Some("learning") => nd.learning.extend(attrs),
        Some("augmentation") => nd.augmentation.extend(attrs),
        _ => nd.layers.push(LayerDescriptor::new(attrs)?),
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dims {
    Spatial { height: i64, width: i64, channels: i64 },
    Dense { units: i64 },
}

impl Dims {
    fn all_positive(&self) -> bool {
        match *self {
            Dims::Spatial {
                height,
                width,
                channels,
            } => height >= 1 && width >= 1 && channels >= 1,
            Dims::Dense { units } => units >= 1,
        }
    }
}

impl fmt::Display for Dims {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Dims::Spatial {
                height,
                width,
                channels,
            } => write!(f, "{height}x{width}x{channels}"),
            Dims::Dense { units } => write!(f, "{units}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShapeFailure {
    pub layer: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShapeReport {
    pub valid: bool,
    /// Output dimensions of each layer up to (excluding) a failing one.
    pub per_layer_shapes: Vec<Dims>,
    pub failure: Option<ShapeFailure>,
}

impl fmt::Display for ShapeReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, d) in self.per_layer_shapes.iter().enumerate() {
            writeln!(f, "# layer {i}: {d}")?;
        }
        match &self.failure {
            None => writeln!(f, "# shapes: valid"),
            Some(fail) => writeln!(f, "# shapes: invalid at layer {}: {}", fail.layer, fail.reason),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Padding {
    Same,
    Valid,
}

/// Output length of a sliding window over `input` positions.
pub fn window_output(input: i64, kernel: i64, stride: i64, padding: Padding) -> i64 {
    match padding {
        Padding::Same => (input + stride - 1).div_euclid(stride),
        Padding::Valid => (input - kernel).div_euclid(stride) + 1,
    }
}

fn int_attr(layer: &LayerDescriptor, index: usize, key: &str) -> Result<i64, PhenotypeError> {
    let raw = layer.get(key).ok_or_else(|| PhenotypeError::MissingAttr {
        layer: index,
        key: key.to_string(),
    })?;
    raw.parse::<i64>()
        .ok()
        .filter(|v| *v >= 1)
        .ok_or_else(|| PhenotypeError::InvalidAttr {
            layer: index,
            key: key.to_string(),
            value: raw.to_string(),
        })
}

fn padding_attr(layer: &LayerDescriptor, index: usize) -> Result<Padding, PhenotypeError> {
    match layer.get("padding") {
        Some("same") => Ok(Padding::Same),
        Some("valid") => Ok(Padding::Valid),
        Some(other) => Err(PhenotypeError::InvalidAttr {
            layer: index,
            key: "padding".into(),
            value: other.to_string(),
        }),
        None => Err(PhenotypeError::MissingAttr {
            layer: index,
            key: "padding".into(),
        }),
    }
}

/// Propagates an `(height, width, channels)` input through the network.
///
/// `same` padding gives `ceil(in / stride)`, `valid` gives
/// `floor((in - k) / stride) + 1`. Dense layers flatten spatial input;
/// convolution or pooling after a dense layer is a failure. Layers of any
/// other kind pass their input through unchanged.
pub fn check_shapes(
    nd: &NetworkDescriptor,
    input: (i64, i64, i64),
) -> Result<ShapeReport, PhenotypeError> {
    let mut current = Dims::Spatial {
        height: input.0,
        width: input.1,
        channels: input.2,
    };
    let mut shapes = Vec::with_capacity(nd.layers.len());
    let mut failure = None;
    if !current.all_positive() {
        failure = Some(ShapeFailure {
            layer: 0,
            reason: format!("input {current} has a non-positive dimension"),
        });
    }
    for (i, layer) in nd.layers.iter().enumerate() {
        if failure.is_some() {
            break;
        }
        let next = if layer.is_spatial() {
            let Dims::Spatial {
                height,
                width,
                channels,
            } = current
            else {
                failure = Some(ShapeFailure {
                    layer: i,
                    reason: format!("{} after a dense layer", layer.kind),
                });
                break;
            };
            let (kernel_key, out_channels) = if layer.kind == "conv" {
                ("filter-shape", int_attr(layer, i, "num-filters")?)
            } else {
                ("kernel-size", channels)
            };
            let kernel = int_attr(layer, i, kernel_key)?;
            let stride = int_attr(layer, i, "stride")?;
            let padding = padding_attr(layer, i)?;
            Dims::Spatial {
                height: window_output(height, kernel, stride, padding),
                width: window_output(width, kernel, stride, padding),
                channels: out_channels,
            }
        } else if layer.is_dense() {
            Dims::Dense {
                units: int_attr(layer, i, "num-units")?,
            }
        } else {
            current
        };
        if !next.all_positive() {
            failure = Some(ShapeFailure {
                layer: i,
                reason: format!("output {next} has a non-positive dimension"),
            });
            break;
        }
        shapes.push(next);
        current = next;
    }
    Ok(ShapeReport {
        valid: failure.is_none(),
        per_layer_shapes: shapes,
        failure,
    })
}

/// Replaces the unit count of the final dense layer, e.g. to match a problem
/// with a different number of classes.
pub fn apply_output_override(
    nd: &NetworkDescriptor,
    units: usize,
) -> Result<NetworkDescriptor, PhenotypeError> {
    let mut out = nd.clone();
    let last = out.layers.last_mut().ok_or(PhenotypeError::NoLayers)?;
    if !last.is_dense() {
        return Err(PhenotypeError::LastLayerNotDense);
    }
    last.set("num-units", units.to_string());
    out.output_units_override = Some(units);
    Ok(out)
}

fn typed_value(raw: &str) -> Value {
    match raw {
        "True" => return Value::Bool(true),
        "False" => return Value::Bool(false),
        _ => {}
    }
    if let Ok(i) = raw.parse::<i64>() {
        if i.to_string() == raw {
            return Value::Number(i.into());
        }
    }
    if let Ok(f) = raw.parse::<f64>() {
        if format!("{f}") == raw {
            if let Some(n) = Number::from_f64(f) {
                return Value::Number(n);
            }
        }
    }
    Value::String(raw.to_string())
}

fn untyped_value(value: &Value) -> Result<String, PhenotypeError> {
    match value {
        Value::Bool(true) => Ok("True".into()),
        Value::Bool(false) => Ok("False".into()),
        Value::String(s) => Ok(s.clone()),
        Value::Number(n) => match (n.as_i64(), n.as_f64()) {
            (Some(i), _) => Ok(i.to_string()),
            (None, Some(f)) => Ok(format!("{f}")),
            _ => Err(PhenotypeError::Malformed(format!("unsupported number {n}"))),
        },
        other => Err(PhenotypeError::Malformed(format!("unsupported value {other}"))),
    }
}

fn pairs_to_object<'a>(pairs: impl Iterator<Item = &'a (String, String)>) -> Map<String, Value> {
    pairs.map(|(k, v)| (k.clone(), typed_value(v))).collect()
}

/// JSON hand-off format. Each network layer becomes
/// `{"kind": <layer value>, <other attrs...>}` with ints, floats and booleans
/// typed; key order follows the grammar.
pub fn export_json(nd: &NetworkDescriptor) -> Value {
    let layers = nd
        .layers
        .iter()
        .map(|l| {
            let mut obj = Map::new();
            let rest = if l.is_network_layer() {
                obj.insert("kind".into(), Value::String(l.kind.clone()));
                &l.attrs[1..]
            } else {
                &l.attrs[..]
            };
            obj.extend(pairs_to_object(rest.iter()));
            Value::Object(obj)
        })
        .collect();
    let mut root = Map::new();
    root.insert("layers".into(), Value::Array(layers));
    root.insert("learning".into(), Value::Object(pairs_to_object(nd.learning.iter())));
    root.insert(
        "augmentation".into(),
        Value::Object(pairs_to_object(nd.augmentation.iter())),
    );
    Value::Object(root)
}

/// Inverse of [`export_json`].
pub fn import_json(value: &Value) -> Result<NetworkDescriptor, PhenotypeError> {
    let malformed = |m: &str| PhenotypeError::Malformed(m.to_string());
    let root = value.as_object().ok_or_else(|| malformed("root is not an object"))?;
    let section = |name: &str| -> Result<Attrs, PhenotypeError> {
        match root.get(name) {
            None => Ok(Vec::new()),
            Some(Value::Object(map)) => map
                .iter()
                .map(|(k, v)| Ok((k.clone(), untyped_value(v)?)))
                .collect(),
            Some(_) => Err(malformed(name)),
        }
    };
    let mut nd = NetworkDescriptor {
        learning: section("learning")?,
        augmentation: section("augmentation")?,
        ..Default::default()
    };
    let layers = root
        .get("layers")
        .and_then(Value::as_array)
        .ok_or_else(|| malformed("missing layers array"))?;
    for layer in layers {
        let obj = layer.as_object().ok_or_else(|| malformed("layer is not an object"))?;
        let mut attrs = Vec::with_capacity(obj.len());
        for (k, v) in obj {
            if k == "kind" {
                attrs.push(("layer".to_string(), untyped_value(v)?));
            } else {
                attrs.push((k.clone(), untyped_value(v)?));
            }
        }
        nd.layers.push(LayerDescriptor::new(attrs)?);
    }
    Ok(nd)
}

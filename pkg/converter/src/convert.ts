/**
 * ONNX graph to JSON IR conversion.
 *
 * The engine's operator registry covers linear and piecewise-linear layers
 * only; anything else lands in the report's unsupported list with a reason.
 * Shape/parameter inputs that ONNX models carry as initializers (Reshape
 * targets, Slice indices, Upsample scales) are folded into node attributes,
 * and alias nodes (Identity, inference Dropout, Constant) disappear during
 * conversion.
 */

import { OnnxAttribute, OnnxModel, OnnxNode, tensorValues } from './onnx.js';
import { IrDocument, IrNode, IrTensor, irTensor } from './ir.js';

export interface UnsupportedNode {
  name: string;
  op_type: string;
  reason: string;
}

export interface ConversionReport {
  supported: boolean;
  node_map: Record<string, string>;
  unsupported: UnsupportedNode[];
  notes: string[];
  probe_count?: number;
  max_deviation_vs_engine?: number;
  max_deviation_vs_source?: number;
}

export interface ConversionResult {
  ir: IrDocument | null;
  report: ConversionReport;
}

interface Init {
  dims: number[];
  values: Float64Array;
}

function attrInts(a: OnnxAttribute | undefined): number[] | undefined {
  if (!a) return undefined;
  if (a.ints.length) return a.ints.map(Number);
  if (a.i !== undefined) return [Number(a.i)];
  return undefined;
}

function attrInt(a: OnnxAttribute | undefined, fallback: number): number {
  return a?.i !== undefined ? Number(a.i) : fallback;
}

function attrFloat(a: OnnxAttribute | undefined, fallback: number): number {
  return a?.f !== undefined ? a.f : fallback;
}

export function convertModel(model: OnnxModel): ConversionResult {
  const report: ConversionReport = {
    supported: true,
    node_map: {},
    unsupported: [],
    notes: [],
  };
  const graph = model.graph;

  const inits = new Map<string, Init>();
  for (const t of graph.initializers) {
    inits.set(t.name, { dims: t.dims, values: tensorValues(t) });
  }

  // alias resolution: Identity / inference Dropout forward their input,
  // Constant nodes become initializers
  const alias = new Map<string, string>();
  const resolve = (name: string): string => {
    let cur = name;
    while (alias.has(cur)) cur = alias.get(cur)!;
    return cur;
  };

  const nodes: IrNode[] = [];
  const usedInits = new Set<string>();
  let counter = 0;

  const freshName = (node: OnnxNode): string =>
    node.name !== '' ? node.name : `${node.opType.toLowerCase()}_${counter++}`;

  const reject = (node: OnnxNode, reason: string) => {
    report.unsupported.push({ name: node.name, op_type: node.opType, reason });
    report.supported = false;
  };

  const initOf = (name: string): Init | undefined => inits.get(resolve(name));

  for (const node of graph.nodes) {
    if (node.domain !== '' && node.domain !== 'ai.onnx') {
      reject(node, `non-default domain '${node.domain}'`);
      continue;
    }
    const op = node.opType;
    if (op === 'Identity' || op === 'Dropout') {
      alias.set(node.outputs[0], resolve(node.inputs[0]));
      continue;
    }
    if (op === 'Constant') {
      const t = node.attrs.get('value')?.tensor;
      if (!t) {
        reject(node, 'Constant without tensor value');
        continue;
      }
      inits.set(node.outputs[0], { dims: t.dims, values: tensorValues(t) });
      continue;
    }

    const name = freshName(node);
    const inputs = node.inputs.filter((i) => i !== '').map(resolve);
    const outputs = [...node.outputs];
    const attrs: Record<string, unknown> = {};
    const emit = (opType: string, useInputs: string[] = inputs) => {
      for (const i of useInputs) if (inits.has(i)) usedInits.add(i);
      nodes.push({ name, op_type: opType, inputs: useInputs, outputs, attrs });
      report.node_map[node.name || name] = name;
    };

    const autoPad = node.attrs.get('auto_pad');
    if (autoPad && autoPad.s !== undefined && autoPad.s !== 'NOTSET') {
      reject(node, `auto_pad mode '${autoPad.s}' requires explicit pads`);
      continue;
    }

    switch (op) {
      case 'Conv':
      case 'ConvTranspose': {
        const kernel = attrInts(node.attrs.get('kernel_shape'));
        if (kernel) attrs.kernel_shape = kernel;
        attrs.strides = attrInts(node.attrs.get('strides')) ?? [1, 1];
        attrs.pads = attrInts(node.attrs.get('pads')) ?? [0, 0, 0, 0];
        const dil = attrInts(node.attrs.get('dilations'));
        if (dil) attrs.dilations = dil;
        attrs.group = attrInt(node.attrs.get('group'), 1);
        if (op === 'ConvTranspose') {
          attrs.output_padding = attrInts(node.attrs.get('output_padding')) ?? [0, 0];
          if (attrInts(node.attrs.get('output_shape'))) {
            reject(node, 'ConvTranspose output_shape attribute is not supported');
            continue;
          }
        }
        emit(op);
        break;
      }
      case 'Gemm': {
        attrs.alpha = attrFloat(node.attrs.get('alpha'), 1.0);
        attrs.beta = attrFloat(node.attrs.get('beta'), 1.0);
        attrs.transA = attrInt(node.attrs.get('transA'), 0);
        attrs.transB = attrInt(node.attrs.get('transB'), 0);
        emit(op);
        break;
      }
      case 'MatMul':
      case 'Add':
      case 'Sub':
      case 'Neg':
      case 'Abs':
      case 'Relu':
      case 'Sigmoid':
      case 'GlobalAveragePool': {
        emit(op);
        break;
      }
      case 'LeakyRelu': {
        attrs.alpha = attrFloat(node.attrs.get('alpha'), 0.01);
        emit(op);
        break;
      }
      case 'MaxPool':
      case 'AveragePool': {
        attrs.kernel_shape = attrInts(node.attrs.get('kernel_shape'));
        attrs.strides = attrInts(node.attrs.get('strides')) ?? [1, 1];
        attrs.pads = attrInts(node.attrs.get('pads')) ?? [0, 0, 0, 0];
        if (op === 'AveragePool') {
          attrs.count_include_pad = attrInt(node.attrs.get('count_include_pad'), 0);
        }
        if (attrInts(node.attrs.get('dilations'))?.some((d) => d !== 1)) {
          reject(node, 'pooling dilations are not supported');
          continue;
        }
        emit(op);
        break;
      }
      case 'BatchNormalization': {
        attrs.epsilon = attrFloat(node.attrs.get('epsilon'), 1e-5);
        if (outputs.length > 1) {
          reject(node, 'training-mode BatchNormalization outputs are not supported');
          continue;
        }
        emit(op);
        break;
      }
      case 'Flatten': {
        attrs.axis = attrInt(node.attrs.get('axis'), 1);
        emit(op);
        break;
      }
      case 'Transpose': {
        const perm = attrInts(node.attrs.get('perm'));
        if (perm) attrs.perm = perm;
        emit(op);
        break;
      }
      case 'Concat': {
        attrs.axis = attrInt(node.attrs.get('axis'), 0);
        emit(op);
        break;
      }
      case 'Reshape': {
        const shape = initOf(node.inputs[1]);
        if (!shape) {
          reject(node, 'Reshape target must be a constant initializer');
          continue;
        }
        attrs.shape = Array.from(shape.values, Number);
        emit('Reshape', [inputs[0]]);
        break;
      }
      case 'Slice': {
        if (node.inputs.length === 1) {
          attrs.starts = attrInts(node.attrs.get('starts'));
          attrs.ends = attrInts(node.attrs.get('ends'));
          const axes = attrInts(node.attrs.get('axes'));
          if (axes) attrs.axes = axes;
        } else {
          const names = ['starts', 'ends', 'axes', 'steps'];
          let ok = true;
          for (let k = 1; k < node.inputs.length; k++) {
            if (node.inputs[k] === '') continue;
            const init = initOf(node.inputs[k]);
            if (!init) {
              reject(node, `Slice ${names[k - 1]} must be a constant initializer`);
              ok = false;
              break;
            }
            attrs[names[k - 1]] = Array.from(init.values, Number);
          }
          if (!ok) continue;
        }
        emit('Slice', [inputs[0]]);
        break;
      }
      case 'Upsample':
      case 'Resize': {
        const mode = node.attrs.get('mode')?.s ?? 'nearest';
        if (mode !== 'nearest') {
          reject(node, `resize mode '${mode}' is not piecewise linear across pixels`);
          continue;
        }
        let scales: number[] | undefined;
        const scalesAttr = node.attrs.get('scales');
        if (scalesAttr?.floats.length) scales = scalesAttr.floats;
        const scaleInput = op === 'Upsample' ? node.inputs[1] : node.inputs[2];
        if (!scales && scaleInput) {
          const init = initOf(scaleInput);
          if (init && init.values.length) scales = Array.from(init.values);
        }
        if (!scales || scales.length === 0) {
          reject(node, 'upsample scales must be constant');
          continue;
        }
        if (scales.some((s) => !Number.isInteger(s) || s < 1)) {
          reject(node, `non-integer upsample scales ${JSON.stringify(scales)}`);
          continue;
        }
        attrs.scales = scales.map(Number);
        emit('UpsampleNearest', [inputs[0]]);
        break;
      }
      case 'Mul':
      case 'Div': {
        const scalar = initOf(node.inputs[1]);
        if (!scalar || scalar.values.length !== 1) {
          reject(node, `${op} is supported only with a scalar constant operand`);
          continue;
        }
        const c = op === 'Mul' ? scalar.values[0] : 1.0 / scalar.values[0];
        attrs.value = c;
        emit('MulScalar', [inputs[0]]);
        break;
      }
      default:
        reject(node, 'operator outside the piecewise-linear registry');
    }
  }

  if (!report.supported) {
    return { ir: null, report };
  }

  const initNames = new Set(inits.keys());
  const irInputs = graph.inputs
    .filter((v) => !initNames.has(v.name))
    .map((v) => {
      const shape = v.dims.map((d) => {
        if (d > 0) return d;
        report.notes.push(`input '${v.name}': dynamic dim mapped to 1`);
        return 1;
      });
      return { name: v.name, shape };
    });
  const irOutputs = graph.outputs.map((v) => ({
    name: resolve(v.name),
    shape: v.dims.map((d) => (d > 0 ? d : 1)),
  }));

  const initializers: IrTensor[] = [];
  for (const name of [...usedInits].sort()) {
    const init = inits.get(name)!;
    initializers.push(irTensor(name, init.dims, init.values));
  }

  const ir: IrDocument = {
    ir_version: 1,
    inputs: irInputs,
    outputs: irOutputs,
    initializers,
    nodes,
  };
  return { ir, report };
}

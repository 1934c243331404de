// SMT-LIB2 front-end for the z3-solver WASM build.
// Reads a full SMT-LIB2 script on stdin, prints the solver responses on stdout.
const { init } = require('z3-solver');
const fs = require('fs');

async function main() {
  const { Z3, em } = await init();
  const cfg = Z3.mk_config();
  const ctx = Z3.mk_context(cfg);
  const input = fs.readFileSync(0, 'utf8');
  const out = await Z3.eval_smtlib2_string(ctx, input);
  process.stdout.write(out);
  em.PThread.terminateAllThreads();
  process.exit(0);
}

main().catch(e => { console.error(String(e)); process.exit(3); });

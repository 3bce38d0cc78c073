// SPDX-License-Identifier: Apache-2.0
// The oracle editor as an external plug-in: oie-oracle-editor <request-dir>.
#include <cstdio>
#include <exception>

#include "oie/firstframe.hpp"

int main(int argc, char** argv) {
  if (argc != 2) {
    std::fprintf(stderr, "usage: %s <request-dir>\n", argv[0]);
    return 2;
  }
  try {
    const oie::EditorRequest req = oie::read_request_dir(argv[1]);
    const oie::EditorResult res = oie::oracle_edit(req);
    oie::save_tns(std::filesystem::path(argv[1]) / "ir.tns", oie::to_tensor(res.ir));
  } catch (const std::exception& e) {
    std::fprintf(stderr, "oie-oracle-editor: %s\n", e.what());
    return 1;
  }
  return 0;
}

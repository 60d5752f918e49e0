// Serves the in-process scene stub over the embedding HTTP protocol, for
// exercising `--provider http://...` without a real encoder.

#include <cstdio>
#include <string>

#include "entlm/embedding_http.hpp"

int main(int argc, char** argv) {
  const int port = argc > 1 ? std::stoi(argv[1]) : 8765;
  const std::size_t dim = argc > 2 ? std::stoul(argv[2]) : 64;
  entlm::SceneProvider stub(dim, 0);
  httplib::Server server;
  entlm::mount_embedding_routes(server, stub);
  std::printf("embedding stub (dim %zu) on http://127.0.0.1:%d\n", dim, port);
  std::fflush(stdout);
  return server.listen("127.0.0.1", port) ? 0 : 1;
}
